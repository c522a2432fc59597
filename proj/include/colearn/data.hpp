#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colearn/featurebank.hpp"
#include "colearn/model.hpp"
#include "colearn/numerics.hpp"

namespace colearn {

/// Target inputs are scale * R * x + translation, where R applies
/// rotation_angles[i] (radians) in the coordinate plane (2i, 2i+1).
struct ShiftTransform {
    std::vector<double> rotation_angles{0.8, 0.8, 0.8, 0.8};
    Vector translation;  // empty = no translation
    double scale = 1.0;
};

/// Stand-in for a frozen pre-trained extractor: a random two-layer tanh
/// map of the target input (map_dim outputs) concatenated with a noisy
/// class-signal channel (signal_dim outputs). Both blocks are multiplied
/// by `informativeness` before isotropic noise is added, so 0 gives pure
/// noise and larger values give increasingly class-discriminative features.
struct PretrainedMapSpec {
    std::size_t hidden_dim = 32;
    std::size_t map_dim = 8;
    std::size_t signal_dim = 8;
    double signal_strength = 1.25;
    double noise = 0.5;
    double informativeness = 1.0;

    std::size_t feature_dim() const noexcept { return map_dim + signal_dim; }
};

/// Class-conditional Gaussian mixture with a covariate shift between
/// source and target. Defaults describe the reference task (4 classes,
/// 8 inputs, 400 target samples, informative bank, seed 7).
struct SyntheticSpec {
    std::size_t classes = 4;
    std::size_t input_dim = 8;
    std::size_t source_per_class = 100;
    std::size_t target_per_class = 100;
    /// Distance of every class mean from the origin; means are orthogonal
    /// when classes <= input_dim.
    double separation = 4.0;
    /// Standard deviation of the isotropic within-class noise.
    double covariance_scale = 1.0;
    ShiftTransform shift;
    PretrainedMapSpec pretrained;
    std::uint64_t seed = 7;

    void validate() const;
};

enum class Domain { Source, Target };

struct Dataset {
    Matrix inputs;
    std::optional<Labels> labels;
    Domain domain = Domain::Source;

    std::size_t size() const noexcept { return inputs.rows(); }
    bool operator==(const Dataset&) const = default;
};

struct SyntheticProblem {
    Dataset source;        // labeled
    Dataset target;        // unlabeled
    FeatureBank bank;      // pre-trained features of the target inputs
    Labels target_truth;   // held out, for evaluation only
};

/// Deterministic in spec.seed. Inputs and bank features are rounded to
/// float32 so that they survive the binary formats unchanged.
SyntheticProblem generate(const SyntheticSpec& spec);

struct SourceTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 50;
    double lr = 0.05;
    double momentum = 0.9;
    double label_smoothing = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Supervised training of extractor and classifier on labeled source data
/// (mean cross-entropy per minibatch). The returned classifier is not
/// frozen. Throws InvalidArgument on unlabeled data and NumericalError if
/// the loss becomes non-finite.
AdaptationModel train_source(const Dataset& source, std::span<const std::size_t> extractor_dims,
                             std::size_t num_classes, const SourceTrainConfig& config);

/// "CFDS" v1: magic, u32 version, u64 N, u32 d, u32 flags (bit 0: labels
/// present, bit 1: target domain), N*d f32 row-major, then N i32 labels.
std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Header x0..x{d-1}, plus a trailing "label" column when labeled.
void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path, Domain domain);

/// "sample_id,label" with one row per sample in order.
void save_labels_csv(std::span<const std::size_t> labels, const std::filesystem::path& path);
Labels load_labels_csv(const std::filesystem::path& path);

}  // namespace colearn
