#include "colearn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "colearn/errors.hpp"

namespace colearn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw InvalidArgument("matrix data has " + std::to_string(data_.size()) +
                              " entries, expected " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + " contains a non-finite value");
    }
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() noexcept {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) noexcept {
    // Rejection keeps the draw unbiased for any n.
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % range);
}

void Rng::shuffle(std::span<std::size_t> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[index(i)]);
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw InvalidArgument("softmax: empty logits");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("softmax: temperature must be positive and finite");
    }
    require_finite(logits, "softmax logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const Vector p = softmax(logits.row(r), temperature);
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: length mismatch");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_similarity: zero-norm vector");
    return dot(a, b) / (na * nb);
}

Vector l2_normalize(std::span<const double> v) {
    const double n = norm(v);
    if (n == 0.0) throw DegenerateInput("l2_normalize: zero-norm vector");
    if (!std::isfinite(n)) throw InvalidArgument("l2_normalize: non-finite input");
    Vector out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) throw InvalidArgument("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

Labels argmax_rows(const Matrix& m) {
    Labels out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = argmax(m.row(r));
    return out;
}

Vector max_rows(const Matrix& m) {
    Vector out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m.row(r)[argmax(m.row(r))];
    return out;
}

}  // namespace colearn
