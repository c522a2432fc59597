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

/// How the two branches' predictions are fused into a pseudolabel.
enum class SchemeKind {
    MatchOrConf,   // agreed class, else the uniquely confident branch
    SelfConf,      // confident adaptation-branch predictions
    OtherConf,     // confident pre-trained-branch predictions
    Match,         // agreed class only
    MatchAndConf,  // agreed class when both branches are confident
};

struct Scheme {
    SchemeKind kind = SchemeKind::MatchOrConf;
    /// A branch is confident when its confidence is strictly greater than gamma.
    double gamma = 0.5;

    void validate() const;
};

std::string_view to_string(SchemeKind kind);
/// Accepts the CLI spellings ("match-or-conf", ...). Throws InvalidArgument.
SchemeKind parse_scheme(std::string_view name);

struct BranchPrediction {
    std::size_t predicted_class = 0;
    double confidence = 0.0;  // max softmax probability
};

enum class Provenance { Match, AdaptConf, PretrainedConf, Self, Other };

std::string_view to_string(Provenance p);

struct Pseudolabel {
    std::size_t sample = 0;
    std::size_t label = 0;
    Provenance provenance = Provenance::Match;
    bool operator==(const Pseudolabel&) const = default;
};

/// Pseudolabels sorted by sample index; samples absent from `assigned`
/// are unlabeled.
struct PseudolabelSet {
    std::vector<Pseudolabel> assigned;
    std::size_t total_samples = 0;

    std::size_t size() const noexcept { return assigned.size(); }
    std::vector<bool> mask() const;
    bool operator==(const PseudolabelSet&) const = default;
};

/// Fusion with provenance. nullopt means the sample stays unlabeled.
std::optional<Pseudolabel> fuse_labeled(const Scheme& scheme, const BranchPrediction& adapt,
                                        const BranchPrediction& pretrained, std::size_t sample = 0);

std::optional<std::size_t> fuse(const Scheme& scheme, const BranchPrediction& adapt,
                                const BranchPrediction& pretrained);

/// Argmax and max-probability of every row.
std::vector<BranchPrediction> branch_predictions(const Matrix& probs);

/// Applies fuse() to every sample. `pretrained_confidence`, when given,
/// replaces the pre-trained branch's confidences (e.g. measured before
/// temperature sharpening); the predicted classes always come from
/// `pretrained_probs`.
PseudolabelSet build_pseudolabel_set(const Scheme& scheme, const Matrix& adapt_probs,
                                     const Matrix& pretrained_probs,
                                     const std::optional<Vector>& pretrained_confidence = std::nullopt);

struct PseudolabelMetrics {
    double proportion = 0.0;
    /// nullopt when nothing is labeled.
    std::optional<double> accuracy;
};

PseudolabelMetrics pseudolabel_metrics(const PseudolabelSet& set, std::span<const std::size_t> truth);

/// "sample_id,class,provenance" with a header row.
std::string pseudolabels_to_csv(const PseudolabelSet& set);
void save_pseudolabels_csv(const PseudolabelSet& set, const std::filesystem::path& path);

}  // namespace colearn
