#include "colearn/pseudolabel.hpp"

#include <cmath>
#include <string>

#include "colearn/binary_io.hpp"
#include "colearn/errors.hpp"

namespace colearn {

void Scheme::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw InvalidArgument("confidence threshold gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
}

std::string_view to_string(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::MatchOrConf: return "match-or-conf";
        case SchemeKind::SelfConf: return "self-conf";
        case SchemeKind::OtherConf: return "other-conf";
        case SchemeKind::Match: return "match";
        case SchemeKind::MatchAndConf: return "match-and-conf";
    }
    return "match-or-conf";
}

SchemeKind parse_scheme(std::string_view name) {
    for (auto k : {SchemeKind::MatchOrConf, SchemeKind::SelfConf, SchemeKind::OtherConf,
                   SchemeKind::Match, SchemeKind::MatchAndConf}) {
        if (name == to_string(k)) return k;
    }
    throw InvalidArgument("unknown pseudolabel scheme \"" + std::string(name) +
                          "\" (expected match-or-conf, self-conf, other-conf, match, match-and-conf)");
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Match: return "match";
        case Provenance::AdaptConf: return "adapt_conf";
        case Provenance::PretrainedConf: return "pretrained_conf";
        case Provenance::Self: return "self";
        case Provenance::Other: return "other";
    }
    return "match";
}

std::vector<bool> PseudolabelSet::mask() const {
    std::vector<bool> m(total_samples, false);
    for (const auto& p : assigned) m[p.sample] = true;
    return m;
}

std::optional<Pseudolabel> fuse_labeled(const Scheme& scheme, const BranchPrediction& adapt,
                                        const BranchPrediction& pretrained, std::size_t sample) {
    const bool match = adapt.predicted_class == pretrained.predicted_class;
    const bool adapt_conf = adapt.confidence > scheme.gamma;
    const bool pre_conf = pretrained.confidence > scheme.gamma;
    auto label = [&](std::size_t cls, Provenance p) { return Pseudolabel{sample, cls, p}; };

    switch (scheme.kind) {
        case SchemeKind::MatchOrConf:
            if (match) return label(adapt.predicted_class, Provenance::Match);
            if (adapt_conf && pre_conf) return std::nullopt;
            if (adapt_conf) return label(adapt.predicted_class, Provenance::AdaptConf);
            if (pre_conf) return label(pretrained.predicted_class, Provenance::PretrainedConf);
            return std::nullopt;
        case SchemeKind::SelfConf:
            if (adapt_conf) return label(adapt.predicted_class, Provenance::Self);
            return std::nullopt;
        case SchemeKind::OtherConf:
            if (pre_conf) return label(pretrained.predicted_class, Provenance::Other);
            return std::nullopt;
        case SchemeKind::Match:
            if (match) return label(adapt.predicted_class, Provenance::Match);
            return std::nullopt;
        case SchemeKind::MatchAndConf:
            if (match && adapt_conf && pre_conf) return label(adapt.predicted_class, Provenance::Match);
            return std::nullopt;
    }
    return std::nullopt;
}

std::optional<std::size_t> fuse(const Scheme& scheme, const BranchPrediction& adapt,
                                const BranchPrediction& pretrained) {
    if (auto p = fuse_labeled(scheme, adapt, pretrained)) return p->label;
    return std::nullopt;
}

std::vector<BranchPrediction> branch_predictions(const Matrix& probs) {
    std::vector<BranchPrediction> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const std::size_t c = argmax(probs.row(r));
        out[r] = {c, probs(r, c)};
    }
    return out;
}

PseudolabelSet build_pseudolabel_set(const Scheme& scheme, const Matrix& adapt_probs,
                                     const Matrix& pretrained_probs,
                                     const std::optional<Vector>& pretrained_confidence) {
    scheme.validate();
    if (adapt_probs.rows() != pretrained_probs.rows()) {
        throw InvalidArgument("adaptation probabilities have " + std::to_string(adapt_probs.rows()) +
                              " rows, pre-trained probabilities have " +
                              std::to_string(pretrained_probs.rows()));
    }
    if (adapt_probs.cols() != pretrained_probs.cols()) {
        throw InvalidArgument("branch probability matrices disagree on the class count");
    }
    if (pretrained_confidence && pretrained_confidence->size() != pretrained_probs.rows()) {
        throw InvalidArgument("pre-trained confidence override has the wrong length");
    }
    const auto adapt = branch_predictions(adapt_probs);
    auto pre = branch_predictions(pretrained_probs);
    if (pretrained_confidence) {
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i].confidence = (*pretrained_confidence)[i];
    }
    PseudolabelSet set;
    set.total_samples = adapt_probs.rows();
    for (std::size_t i = 0; i < adapt.size(); ++i) {
        if (auto p = fuse_labeled(scheme, adapt[i], pre[i], i)) set.assigned.push_back(*p);
    }
    return set;
}

PseudolabelMetrics pseudolabel_metrics(const PseudolabelSet& set, std::span<const std::size_t> truth) {
    if (truth.size() != set.total_samples) {
        throw InvalidArgument("pseudolabel set covers " + std::to_string(set.total_samples) +
                              " samples but " + std::to_string(truth.size()) + " labels were given");
    }
    PseudolabelMetrics m;
    if (set.total_samples > 0) {
        m.proportion = static_cast<double>(set.size()) / static_cast<double>(set.total_samples);
    }
    if (!set.assigned.empty()) {
        std::size_t correct = 0;
        for (const auto& p : set.assigned) correct += p.label == truth[p.sample] ? 1 : 0;
        m.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
    }
    return m;
}

std::string pseudolabels_to_csv(const PseudolabelSet& set) {
    std::string out = "sample_id,class,provenance\n";
    for (const auto& p : set.assigned) {
        out += std::to_string(p.sample) + "," + std::to_string(p.label) + "," +
               std::string(to_string(p.provenance)) + "\n";
    }
    return out;
}

void save_pseudolabels_csv(const PseudolabelSet& set, const std::filesystem::path& path) {
    write_file(path, pseudolabels_to_csv(set));
}

}  // namespace colearn
