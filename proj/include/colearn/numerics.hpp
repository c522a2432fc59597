#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace colearn {

using Vector = std::vector<double>;

/// Class labels, one per sample.
using Labels = std::vector<std::size_t>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Throws InvalidArgument unless data.size() == rows * cols.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// xoshiro256** seeded through splitmix64. The stream depends only on the
/// seed; the derived distributions below are implemented here rather than
/// through <random> so they are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (one draw per call).
    double normal() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n) noexcept;
    void shuffle(std::span<std::size_t> items) noexcept;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// sigma(logits / temperature), max-subtracted. Throws InvalidArgument on
/// non-finite input, empty input or temperature <= 0.
Vector softmax(std::span<const double> logits, double temperature = 1.0);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

/// Throws DegenerateInput if either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Throws DegenerateInput on a zero vector.
Vector l2_normalize(std::span<const double> v);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// argmax of every row.
Labels argmax_rows(const Matrix& m);

/// Largest entry of every row.
Vector max_rows(const Matrix& m);

}  // namespace colearn
