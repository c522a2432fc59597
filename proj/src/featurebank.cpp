#include "colearn/featurebank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "colearn/binary_io.hpp"
#include "colearn/errors.hpp"
#include "csv.hpp"

namespace colearn {

namespace {

constexpr std::uint32_t kBankVersion = 1;
constexpr std::uint32_t kFlagLabels = 1u;

Matrix unit_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double n = norm(m.row(r));
        if (n == 0.0) throw DegenerateInput("feature row " + std::to_string(r) + " has zero norm");
        auto dst = out.row(r);
        const auto src = m.row(r);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / n;
    }
    return out;
}

void check_row_stochastic(const Matrix& probs) {
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double s = 0.0;
        for (double p : probs.row(r)) {
            if (!(p >= 0.0)) throw InvalidArgument("probability row " + std::to_string(r) + " has a negative or NaN entry");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw InvalidArgument("probability row " + std::to_string(r) + " sums to " +
                                  std::to_string(s));
        }
    }
}

// One round of probability-weighted means of unit features.
Matrix weighted_centroids(const Matrix& unit, const Matrix& probs, const std::vector<bool>* subset) {
    const std::size_t classes = probs.cols();
    const std::size_t dim = unit.cols();
    Matrix sums(classes, dim);
    Vector weight(classes, 0.0);
    for (std::size_t x = 0; x < unit.rows(); ++x) {
        if (subset && !(*subset)[x]) continue;
        const auto f = unit.row(x);
        for (std::size_t i = 0; i < classes; ++i) {
            const double w = probs(x, i);
            weight[i] += w;
            auto s = sums.row(i);
            for (std::size_t j = 0; j < dim; ++j) s[j] += w * f[j];
        }
    }
    for (std::size_t i = 0; i < classes; ++i) {
        if (!(weight[i] > 0.0)) throw DegenerateClass(i, "zero total weight over the selected samples");
        auto s = sums.row(i);
        for (double& v : s) v /= weight[i];
        if (norm(s) == 0.0) throw DegenerateClass(i, "centroid has zero norm");
    }
    return sums;
}

}  // namespace

FeatureBank::FeatureBank(Matrix features, std::optional<Labels> labels,
                         std::vector<std::uint64_t> sample_ids)
    : features_(std::move(features)), labels_(std::move(labels)), ids_(std::move(sample_ids)) {
    if (!features_.all_finite()) throw InvalidArgument("feature bank contains non-finite values");
    if (features_.cols() == 0 && features_.rows() > 0) throw InvalidArgument("feature bank has zero dimension");
    unit_ = unit_rows(features_);
    if (ids_.empty()) {
        ids_.resize(features_.rows());
        for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = i;
    } else if (ids_.size() != features_.rows()) {
        throw InvalidArgument("feature bank has " + std::to_string(features_.rows()) + " rows but " +
                              std::to_string(ids_.size()) + " sample ids");
    }
    if (labels_ && labels_->size() != features_.rows()) {
        throw InvalidArgument("feature bank has " + std::to_string(features_.rows()) + " rows but " +
                              std::to_string(labels_->size()) + " labels");
    }
    normalized_ = true;
    for (std::size_t r = 0; r < features_.rows() && normalized_; ++r) {
        normalized_ = std::abs(norm(features_.row(r)) - 1.0) <= 1e-12;
    }
}

CentroidClassifier compute_centroids(const FeatureBank& bank, const Matrix& probs,
                                     const CentroidOptions& options) {
    if (probs.rows() != bank.size()) {
        throw InvalidArgument("probabilities have " + std::to_string(probs.rows()) +
                              " rows, bank has " + std::to_string(bank.size()));
    }
    if (probs.cols() == 0) throw InvalidArgument("probabilities have no classes");
    if (options.iterations < 1) throw InvalidArgument("centroid iterations must be at least 1");
    if (options.subset && options.subset->size() != bank.size()) {
        throw InvalidArgument("centroid subset mask length does not match bank size");
    }
    check_row_stochastic(probs);

    const std::vector<bool>* subset = options.subset ? &*options.subset : nullptr;
    CentroidClassifier clf{weighted_centroids(bank.unit_features(), probs, subset), options.temperature};
    for (std::size_t round = 1; round < options.iterations; ++round) {
        const NccPrediction pred = ncc_predict(clf, bank);
        clf.centroids = weighted_centroids(bank.unit_features(), pred.probs, subset);
    }
    return clf;
}

NccPrediction ncc_predict(const CentroidClassifier& clf, const FeatureBank& bank) {
    if (clf.centroids.cols() != bank.dim()) {
        throw InvalidArgument("centroid dimension " + std::to_string(clf.centroids.cols()) +
                              " does not match bank dimension " + std::to_string(bank.dim()));
    }
    const std::size_t classes = clf.num_classes();
    Vector inv_norm(classes);
    for (std::size_t i = 0; i < classes; ++i) {
        const double n = norm(clf.centroids.row(i));
        if (n == 0.0) throw DegenerateClass(i, "centroid has zero norm");
        inv_norm[i] = 1.0 / n;
    }
    NccPrediction out{Matrix(bank.size(), classes), Matrix(bank.size(), classes)};
    const Matrix& unit = bank.unit_features();
    for (std::size_t x = 0; x < bank.size(); ++x) {
        auto g = out.logits.row(x);
        for (std::size_t i = 0; i < classes; ++i) {
            g[i] = dot(unit.row(x), clf.centroids.row(i)) * inv_norm[i];
        }
        const Vector p = softmax(g, clf.temperature);
        std::copy(p.begin(), p.end(), out.probs.row(x).begin());
    }
    return out;
}

double oracle_ncc_accuracy(const Matrix& features, std::span<const std::size_t> truth,
                           std::size_t num_classes) {
    if (truth.size() != features.rows()) {
        throw InvalidArgument("oracle: " + std::to_string(truth.size()) + " labels for " +
                              std::to_string(features.rows()) + " samples");
    }
    if (num_classes == 0 || features.rows() == 0) throw InvalidArgument("oracle: empty problem");
    Matrix onehot(features.rows(), num_classes);
    std::vector<std::size_t> count(num_classes, 0);
    for (std::size_t x = 0; x < truth.size(); ++x) {
        if (truth[x] >= num_classes) throw InvalidArgument("oracle: label out of range");
        onehot(x, truth[x]) = 1.0;
        ++count[truth[x]];
    }
    for (std::size_t i = 0; i < num_classes; ++i) {
        if (count[i] == 0) throw DegenerateClass(i, "absent from the labels");
    }
    const Matrix unit = unit_rows(features);
    const Matrix centroids = weighted_centroids(unit, onehot, nullptr);
    Vector inv_norm(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) inv_norm[i] = 1.0 / norm(centroids.row(i));

    std::size_t correct = 0;
    Vector g(num_classes);
    for (std::size_t x = 0; x < unit.rows(); ++x) {
        for (std::size_t i = 0; i < num_classes; ++i) g[i] = dot(unit.row(x), centroids.row(i)) * inv_norm[i];
        if (argmax(g) == truth[x]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double oracle_ncc_accuracy(const FeatureBank& bank, std::span<const std::size_t> truth,
                           std::size_t num_classes) {
    return oracle_ncc_accuracy(bank.features(), truth, num_classes);
}

std::string encode_bank(const FeatureBank& bank) {
    ByteWriter w;
    w.magic("CFBK");
    w.u32(kBankVersion);
    w.u64(bank.size());
    w.u32(static_cast<std::uint32_t>(bank.dim()));
    w.u32(bank.labels() ? kFlagLabels : 0u);
    for (double v : bank.features().data()) w.f32(static_cast<float>(v));
    if (bank.labels()) {
        for (std::size_t l : *bank.labels()) w.i32(static_cast<std::int32_t>(l));
    }
    return w.take();
}

FeatureBank decode_bank(std::string_view bytes) {
    ByteReader r(bytes);
    r.expect_magic("CFBK");
    const std::uint64_t version_at = r.offset();
    if (const auto v = r.u32(); v != kBankVersion) {
        throw FormatError(version_at, "unsupported bank version " + std::to_string(v));
    }
    const std::uint64_t n = r.u64();
    const std::uint64_t dim_at = r.offset();
    const std::uint32_t d = r.u32();
    if (d == 0) throw FormatError(dim_at, "zero feature dimension");
    const std::uint64_t flags_at = r.offset();
    const std::uint32_t flags = r.u32();
    if ((flags & ~kFlagLabels) != 0) throw FormatError(flags_at, "unknown flag bits");
    const bool has_labels = (flags & kFlagLabels) != 0;

    if (n > std::numeric_limits<std::uint64_t>::max() / 4 / d) throw FormatError(dim_at, "size overflow");
    r.require(n * d * 4 + (has_labels ? n * 4 : 0), "bank payload");

    Matrix features(n, d);
    for (std::size_t row = 0; row < n; ++row) {
        const std::uint64_t row_at = r.offset();
        for (double& v : features.row(row)) {
            const std::uint64_t at = r.offset();
            v = static_cast<double>(r.f32());
            if (!std::isfinite(v)) throw FormatError(at, "non-finite feature value");
        }
        if (norm(features.row(row)) == 0.0) {
            throw FormatError(row_at, "feature row " + std::to_string(row) + " has zero norm");
        }
    }
    std::optional<Labels> labels;
    if (has_labels) {
        labels.emplace(n);
        for (auto& l : *labels) {
            const std::uint64_t at = r.offset();
            const std::int32_t v = r.i32();
            if (v < 0) throw FormatError(at, "negative label " + std::to_string(v));
            l = static_cast<std::size_t>(v);
        }
    }
    r.expect_end();
    return FeatureBank(std::move(features), std::move(labels));
}

void save_bank(const FeatureBank& bank, const std::filesystem::path& path) {
    write_file(path, encode_bank(bank));
}

FeatureBank load_bank(const std::filesystem::path& path) { return decode_bank(read_file(path)); }

FeatureBank load_bank_csv(const std::filesystem::path& path) {
    const csv::Table t = csv::parse(read_file(path));
    const bool has_labels = !t.header.empty() && t.header.back() == "label";
    const std::size_t dim = t.header.size() - (has_labels ? 1 : 0);
    if (dim == 0) throw FormatError(1, "no feature columns");
    Matrix features(t.rows.size(), dim);
    std::optional<Labels> labels;
    if (has_labels) labels.emplace(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::copy_n(t.rows[r].begin(), dim, features.row(r).begin());
        if (norm(features.row(r)) == 0.0) throw FormatError(r + 2, "feature row has zero norm");
        if (has_labels) {
            const double v = t.rows[r].back();
            if (v < 0 || v != std::floor(v)) throw FormatError(r + 2, "label is not a nonnegative integer");
            (*labels)[r] = static_cast<std::size_t>(v);
        }
    }
    return FeatureBank(std::move(features), std::move(labels));
}

void save_bank_csv(const FeatureBank& bank, const std::filesystem::path& path) {
    std::string out;
    for (std::size_t j = 0; j < bank.dim(); ++j) out += (j ? ",f" : "f") + std::to_string(j);
    if (bank.labels()) out += ",label";
    out += '\n';
    for (std::size_t r = 0; r < bank.size(); ++r) {
        const auto row = bank.features().row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ',';
            out += csv::format_value(row[j]);
        }
        if (bank.labels()) out += "," + std::to_string((*bank.labels())[r]);
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace colearn
