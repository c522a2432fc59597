#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colearn/numerics.hpp"

namespace colearn {

/// Frozen features of the pre-trained extractor for every target sample.
/// Immutable once built; rows must have nonzero norm.
class FeatureBank {
public:
    /// Sample ids default to 0..N-1. Throws DegenerateInput on a zero-norm
    /// row and InvalidArgument on non-finite values or length mismatches.
    explicit FeatureBank(Matrix features, std::optional<Labels> labels = std::nullopt,
                         std::vector<std::uint64_t> sample_ids = {});

    std::size_t size() const noexcept { return features_.rows(); }
    std::size_t dim() const noexcept { return features_.cols(); }
    const Matrix& features() const noexcept { return features_; }
    /// Rows of features() scaled to unit length.
    const Matrix& unit_features() const noexcept { return unit_; }
    std::span<const std::uint64_t> sample_ids() const noexcept { return ids_; }
    const std::optional<Labels>& labels() const noexcept { return labels_; }
    /// True when every stored row already has unit length (within 1e-12).
    bool normalized() const noexcept { return normalized_; }

    bool operator==(const FeatureBank& o) const {
        return features_ == o.features_ && labels_ == o.labels_ && ids_ == o.ids_;
    }

private:
    Matrix features_;
    Matrix unit_;
    std::optional<Labels> labels_;
    std::vector<std::uint64_t> ids_;
    bool normalized_ = false;
};

/// Weighted nearest-centroid classifier over bank features: one centroid
/// per class, cosine-similarity logits, temperature-sharpened softmax.
struct CentroidClassifier {
    Matrix centroids;  // classes x dim
    double temperature = 0.01;

    std::size_t num_classes() const noexcept { return centroids.rows(); }
    bool operator==(const CentroidClassifier&) const = default;
};

struct CentroidOptions {
    /// Samples contributing to the centroids; nullopt means all samples.
    std::optional<std::vector<bool>> subset;
    /// Rounds of estimation. Round 1 weights by the given probabilities;
    /// each later round weights by the previous round's sharpened NCC
    /// probabilities.
    std::size_t iterations = 1;
    double temperature = 0.01;
};

/// mu_i = sum_x probs[x][i] * f(x)/|f(x)| / sum_x probs[x][i] over the
/// selected samples. Throws DegenerateClass when a class has zero total
/// weight or its centroid has zero norm.
CentroidClassifier compute_centroids(const FeatureBank& bank, const Matrix& probs,
                                     const CentroidOptions& options = {});

struct NccPrediction {
    Matrix logits;  // cosine similarities
    Matrix probs;   // softmax(logits / temperature)
};

NccPrediction ncc_predict(const CentroidClassifier& clf, const FeatureBank& bank);

/// Fits centroids as class means of unit features under the true labels
/// and returns the accuracy of cosine-argmax classification on the same
/// samples. Throws DegenerateClass if a class in [0, num_classes) is absent.
double oracle_ncc_accuracy(const Matrix& features, std::span<const std::size_t> truth,
                           std::size_t num_classes);
double oracle_ncc_accuracy(const FeatureBank& bank, std::span<const std::size_t> truth,
                           std::size_t num_classes);

/// "CFBK" v1: magic, u32 version, u64 N, u32 D, u32 flags (bit 0: labels
/// present), N*D f32 row-major, then N i32 labels if flagged. All
/// little-endian. Features are narrowed to float32 on save.
std::string encode_bank(const FeatureBank& bank);
FeatureBank decode_bank(std::string_view bytes);
void save_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank load_bank(const std::filesystem::path& path);

/// CSV with a header row and one sample per line; a final column named
/// "label" is read as integer class labels.
FeatureBank load_bank_csv(const std::filesystem::path& path);
void save_bank_csv(const FeatureBank& bank, const std::filesystem::path& path);

}  // namespace colearn
