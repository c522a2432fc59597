#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colearn/numerics.hpp"

namespace colearn {

/// Fully-connected layer: out = weight * in + bias, weight is (out x in).
struct DenseLayer {
    Matrix weight;
    Vector bias;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
    bool operator==(const DenseLayer&) const = default;
};

/// Feature extractor: tanh after every layer except the last, which is
/// linear and produces the features.
struct MlpExtractor {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const;
    std::size_t feature_dim() const;
    /// {input_dim, hidden..., feature_dim}
    std::vector<std::size_t> dims() const;
    /// Throws InvalidArgument if shapes do not chain or a parameter is non-finite.
    void validate() const;
    bool operator==(const MlpExtractor&) const = default;
};

struct LinearClassifier {
    Matrix weight;  // classes x feature_dim
    Vector bias;    // classes

    std::size_t num_classes() const noexcept { return weight.rows(); }
    std::size_t feature_dim() const noexcept { return weight.cols(); }
    bool operator==(const LinearClassifier&) const = default;
};

/// Feature extractor plus linear classifier. During adaptation the
/// classifier is frozen and only extractor parameters move.
struct AdaptationModel {
    MlpExtractor extractor;
    LinearClassifier classifier;
    bool classifier_frozen = false;

    std::size_t input_dim() const { return extractor.input_dim(); }
    std::size_t feature_dim() const { return extractor.feature_dim(); }
    std::size_t num_classes() const noexcept { return classifier.num_classes(); }
    void validate() const;
    bool operator==(const AdaptationModel&) const = default;
};

struct ForwardResult {
    Vector features;
    Vector logits;
    Vector probs;
};

struct BatchForward {
    Matrix features;
    Matrix logits;
    Matrix probs;
};

ForwardResult forward(const AdaptationModel& model, std::span<const double> x);
/// Row-wise forward; row i of each output equals forward(model, inputs.row(i)).
BatchForward forward_batch(const AdaptationModel& model, const Matrix& inputs);

/// One training example with a hard (one-hot) target.
struct LabeledSample {
    std::span<const double> input;
    std::size_t label;
};

/// One training example with a probability-vector target.
struct SoftSample {
    std::span<const double> input;
    std::span<const double> target;
};

/// Gradients shaped like the trainable parameters. `classifier` is only
/// populated when classifier gradients were requested.
struct Gradients {
    std::vector<DenseLayer> extractor;
    std::optional<LinearClassifier> classifier;

    static Gradients zeros_like(const AdaptationModel& model, bool with_classifier);
    Gradients& operator*=(double s);
    Gradients& operator+=(const Gradients& other);
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients grads;
};

/// Summed cross-entropy -sum log p[label] over the batch, with gradients
/// backpropagated through the classifier into the extractor only. An empty
/// batch gives loss 0 and zero gradients.
LossAndGradients cross_entropy_grad(const AdaptationModel& model,
                                    std::span<const LabeledSample> batch);

/// Summed soft-target cross-entropy; optionally also returns classifier
/// gradients (used for supervised source training).
LossAndGradients soft_cross_entropy_grad(const AdaptationModel& model,
                                         std::span<const SoftSample> batch,
                                         bool with_classifier);

/// Momentum SGD, v <- momentum * v + g; theta <- theta - lr * v.
struct SgdState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::vector<DenseLayer> velocity;
    std::optional<LinearClassifier> classifier_velocity;

    static SgdState for_model(const AdaptationModel& model, double learning_rate,
                              double momentum);
};

/// Applies one update in place. A frozen classifier is never written, even
/// if `grads.classifier` is set.
void sgd_step(AdaptationModel& model, const Gradients& grads, SgdState& opt);

/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by
/// layer, weights before biases, row-major.
MlpExtractor init_extractor(std::span<const std::size_t> dims, Rng& rng);
LinearClassifier init_classifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng);
AdaptationModel init_model(std::span<const std::size_t> extractor_dims, std::size_t num_classes,
                           Rng& rng);

/// "CFMD" checkpoint: magic, u32 version, u32 layer count, u32 dims,
/// u32 classes, u32 flags (bit 0: classifier frozen), then f64 parameters
/// in layer order (weight row-major, then bias), classifier last.
std::string encode_model(const AdaptationModel& model);
AdaptationModel decode_model(std::string_view bytes);
void save_model(const AdaptationModel& model, const std::filesystem::path& path);
AdaptationModel load_model(const std::filesystem::path& path);

}  // namespace colearn
