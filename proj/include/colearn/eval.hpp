#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "colearn/featurebank.hpp"
#include "colearn/model.hpp"
#include "colearn/numerics.hpp"

namespace colearn {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth);

/// Fraction of each true class predicted correctly. Every class in
/// [0, num_classes) must occur in `truth`; classes that are never
/// predicted simply score 0.
Vector per_class_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                          std::size_t num_classes);
double mean_per_class_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                               std::size_t num_classes);

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
    std::uint64_t total() const;
    std::uint64_t trace() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                          std::size_t num_classes);
std::string confusion_to_csv(const ConfusionMatrix& cm);

/// Max-probability confidences split by correctness into `bins` equal bins
/// over [0, 1]. Bins are right-closed: bin k covers (k/B, (k+1)/B], and
/// bin 0 also takes confidence 0.
struct ConfidenceHistogram {
    std::vector<double> edges;  // bins + 1 values
    std::vector<std::uint64_t> correct;
    std::vector<std::uint64_t> incorrect;

    std::size_t bins() const noexcept { return correct.size(); }
    bool operator==(const ConfidenceHistogram&) const = default;
};

std::size_t confidence_bin(double confidence, std::size_t bins);
ConfidenceHistogram confidence_histogram(const Matrix& probs, std::span<const std::size_t> truth,
                                         std::size_t bins);

/// Oracle NCC accuracy of the source extractor's features on the target
/// inputs divided by the oracle NCC accuracy of the bank. Below 1 the
/// pre-trained features are the more target-compatible.
double target_compatibility_ratio(const AdaptationModel& source_model, const FeatureBank& bank,
                                  const Matrix& target_inputs, std::span<const std::size_t> truth);

struct EvalReport {
    static constexpr int kSchemaVersion = 1;

    std::size_t num_samples = 0;
    double accuracy = 0.0;
    double mean_per_class_accuracy = 0.0;
    Vector per_class_accuracy;
    ConfusionMatrix confusion;
    ConfidenceHistogram histogram;

    bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate_model(const AdaptationModel& model, const Matrix& inputs,
                          std::span<const std::size_t> truth, std::size_t bins = 10);

/// JSON keys: schema_version, num_samples, accuracy,
/// mean_per_class_accuracy, per_class_accuracy, confusion
/// {num_classes, counts (row-major)}, histogram {edges, correct, incorrect}.
std::string report_to_json(const EvalReport& report, int indent = 2);
EvalReport report_from_json(const std::string& text);

}  // namespace colearn
