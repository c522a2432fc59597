#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "colearn/featurebank.hpp"
#include "colearn/model.hpp"
#include "colearn/numerics.hpp"
#include "colearn/pseudolabel.hpp"

namespace colearn {

enum class CentroidSubset { All, Pseudolabeled };

/// Which probabilities measure the pre-trained branch's confidence.
enum class ConfidenceSource {
    Sharpened,  // softmax(cosine / temperature), the branch's own output
    Raw,        // softmax(cosine) before sharpening
};

struct ColearnConfig {
    Scheme scheme{SchemeKind::MatchOrConf, 0.5};
    std::size_t episodes = 15;
    std::size_t batch_size = 50;
    double lr = 0.01;
    double lr_after_decay = 0.001;
    /// Last episode trained at `lr`; later episodes use `lr_after_decay`.
    std::size_t decay_episode = 10;
    double momentum = 0.9;
    double temperature = 0.01;
    CentroidSubset centroid_subset = CentroidSubset::All;
    std::size_t centroid_iterations = 1;
    /// Scales the co-learning loss; 0.3 when added to another objective.
    double loss_coefficient = 1.0;
    /// Replaces the one-pass-per-episode schedule with a fixed step count.
    std::optional<std::size_t> steps_per_episode;
    ConfidenceSource pretrained_confidence = ConfidenceSource::Sharpened;
    std::uint64_t seed = 0;

    void validate() const;
    /// Learning rate used during `episode` (1-based).
    double learning_rate(std::size_t episode) const;
};

struct EpisodeRecord {
    std::size_t episode = 0;  // 1-based
    double learning_rate = 0.0;
    std::size_t pseudolabel_count = 0;
    double pseudolabel_proportion = 0.0;
    std::size_t steps = 0;
    /// Loss per pseudolabeled sample visited; nullopt when no step ran.
    std::optional<double> mean_loss;
    // Filled only when ground truth was supplied to the session.
    std::optional<double> pseudolabel_accuracy;
    /// Adaptation branch after this episode's update.
    std::optional<double> adaptation_accuracy;
    /// Pre-trained branch whose predictions built this episode's pseudolabels.
    std::optional<double> pretrained_accuracy;

    bool operator==(const EpisodeRecord&) const = default;
};

/// One JSON object per line, keys: episode, learning_rate,
/// pseudolabel_count, pseudolabel_proportion, steps, mean_loss,
/// pseudolabel_accuracy, adaptation_accuracy, pretrained_accuracy
/// (absent values are null).
std::string to_json_line(const EpisodeRecord& record);
void write_metrics_jsonl(const std::vector<EpisodeRecord>& records,
                         const std::filesystem::path& path);

struct ColearnResult {
    AdaptationModel model;
    CentroidClassifier centroids;
    std::vector<EpisodeRecord> records;
};

/// Co-learning state: the adaptation branch (classifier frozen), the
/// pre-trained branch's centroids over a shared immutable bank, and the
/// generator driving minibatch order.
class ColearnSession {
public:
    /// Copies `source` into the adaptation branch, freezes its classifier
    /// and estimates the initial centroids from the source model's
    /// probabilities on all target inputs. `truth` only feeds the episode
    /// records.
    ColearnSession(const AdaptationModel& source, std::shared_ptr<const FeatureBank> bank,
                   Matrix target_inputs, ColearnConfig config,
                   std::optional<Labels> truth = std::nullopt);

    /// Pseudolabel, finetune the extractor for one pass, refresh centroids.
    EpisodeRecord run_episode();
    /// Runs the remaining episodes.
    ColearnResult run();

    const AdaptationModel& model() const noexcept { return model_; }
    const CentroidClassifier& centroids() const noexcept { return centroids_; }
    const FeatureBank& bank() const noexcept { return *bank_; }
    const Matrix& target_inputs() const noexcept { return inputs_; }
    const ColearnConfig& config() const noexcept { return config_; }
    const std::vector<EpisodeRecord>& records() const noexcept { return records_; }
    std::size_t episodes_done() const noexcept { return records_.size(); }
    /// Pseudolabels built by the most recent episode.
    const PseudolabelSet& last_pseudolabels() const noexcept { return last_set_; }

    /// Pseudolabels the current branches would produce, without training.
    PseudolabelSet current_pseudolabels() const;

private:
    AdaptationModel model_;
    std::shared_ptr<const FeatureBank> bank_;
    Matrix inputs_;
    ColearnConfig config_;
    std::optional<Labels> truth_;
    CentroidClassifier centroids_;
    SgdState optimizer_;
    Rng rng_;
    std::vector<EpisodeRecord> records_;
    PseudolabelSet last_set_;
};

/// Convenience wrapper mirroring ColearnSession's constructor.
ColearnSession initialize(const AdaptationModel& source, std::shared_ptr<const FeatureBank> bank,
                          Matrix target_inputs, ColearnConfig config,
                          std::optional<Labels> truth = std::nullopt);

/// coefficient * summed cross-entropy on the pseudolabeled inputs, with
/// gradients scaled the same way. Add to another objective's loss and
/// gradients to compose.
LossAndGradients colearn_loss_term(const AdaptationModel& model, const PseudolabelSet& set,
                                   const Matrix& inputs, double coefficient);

}  // namespace colearn
