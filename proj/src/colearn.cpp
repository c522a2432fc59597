#include "colearn/colearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <json.hpp>

#include "colearn/binary_io.hpp"
#include "colearn/errors.hpp"

namespace colearn {

namespace {

double label_accuracy(const Labels& preds, const Labels& truth) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == truth[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void ColearnConfig::validate() const {
    scheme.validate();
    if (episodes < 1) throw InvalidArgument("episodes must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be positive");
    if (!(lr_after_decay > 0.0) || !std::isfinite(lr_after_decay)) {
        throw InvalidArgument("lr_after_decay must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("temperature must be positive");
    }
    if (centroid_iterations < 1) throw InvalidArgument("centroid_iterations must be at least 1");
    if (!(loss_coefficient >= 0.0) || !std::isfinite(loss_coefficient)) {
        throw InvalidArgument("loss_coefficient must be nonnegative");
    }
    if (steps_per_episode && *steps_per_episode < 1) {
        throw InvalidArgument("steps_per_episode must be at least 1 when set");
    }
}

double ColearnConfig::learning_rate(std::size_t episode) const {
    return episode <= decay_episode ? lr : lr_after_decay;
}

std::string to_json_line(const EpisodeRecord& r) {
    // Key order is part of the metrics file contract.
    nlohmann::ordered_json j;
    j["episode"] = r.episode;
    j["learning_rate"] = r.learning_rate;
    j["pseudolabel_count"] = r.pseudolabel_count;
    j["pseudolabel_proportion"] = r.pseudolabel_proportion;
    j["steps"] = r.steps;
    j["mean_loss"] = optional_json(r.mean_loss);
    j["pseudolabel_accuracy"] = optional_json(r.pseudolabel_accuracy);
    j["adaptation_accuracy"] = optional_json(r.adaptation_accuracy);
    j["pretrained_accuracy"] = optional_json(r.pretrained_accuracy);
    return j.dump();
}

void write_metrics_jsonl(const std::vector<EpisodeRecord>& records, const std::filesystem::path& path) {
    std::string out;
    for (const auto& r : records) out += to_json_line(r) + "\n";
    write_file(path, out);
}

ColearnSession::ColearnSession(const AdaptationModel& source, std::shared_ptr<const FeatureBank> bank,
                               Matrix target_inputs, ColearnConfig config, std::optional<Labels> truth)
    : model_(source),
      bank_(std::move(bank)),
      inputs_(std::move(target_inputs)),
      config_(std::move(config)),
      truth_(std::move(truth)),
      rng_(config_.seed) {
    config_.validate();
    model_.validate();
    if (!bank_) throw InvalidArgument("feature bank is null");
    if (inputs_.rows() != bank_->size()) {
        throw InvalidArgument("target inputs have " + std::to_string(inputs_.rows()) +
                              " samples, feature bank has " + std::to_string(bank_->size()));
    }
    if (inputs_.cols() != model_.input_dim()) {
        throw InvalidArgument("target inputs have " + std::to_string(inputs_.cols()) +
                              " features, source model expects " + std::to_string(model_.input_dim()));
    }
    if (truth_) {
        if (truth_->size() != inputs_.rows()) throw InvalidArgument("truth length does not match target inputs");
        for (std::size_t l : *truth_) {
            if (l >= model_.num_classes()) throw InvalidArgument("truth label out of range");
        }
    }
    model_.classifier_frozen = true;
    optimizer_ = SgdState::for_model(model_, config_.lr, config_.momentum);

    const Matrix probs = forward_batch(model_, inputs_).probs;
    CentroidOptions opts;
    opts.iterations = config_.centroid_iterations;
    opts.temperature = config_.temperature;
    centroids_ = compute_centroids(*bank_, probs, opts);
    last_set_.total_samples = inputs_.rows();
}

PseudolabelSet ColearnSession::current_pseudolabels() const {
    const Matrix adapt = forward_batch(model_, inputs_).probs;
    const NccPrediction pre = ncc_predict(centroids_, *bank_);
    std::optional<Vector> pre_conf;
    if (config_.pretrained_confidence == ConfidenceSource::Raw) pre_conf = max_rows(softmax_rows(pre.logits, 1.0));
    return build_pseudolabel_set(config_.scheme, adapt, pre.probs, pre_conf);
}

EpisodeRecord ColearnSession::run_episode() {
    if (records_.size() >= config_.episodes) {
        throw InvalidArgument("all " + std::to_string(config_.episodes) + " episodes already ran");
    }
    EpisodeRecord rec;
    rec.episode = records_.size() + 1;

    // Both branches on every target sample, before this episode's update.
    const NccPrediction pre = ncc_predict(centroids_, *bank_);
    const Matrix adapt = forward_batch(model_, inputs_).probs;
    std::optional<Vector> pre_conf;
    if (config_.pretrained_confidence == ConfidenceSource::Raw) pre_conf = max_rows(softmax_rows(pre.logits, 1.0));
    PseudolabelSet set = build_pseudolabel_set(config_.scheme, adapt, pre.probs, pre_conf);

    rec.pseudolabel_count = set.size();
    rec.pseudolabel_proportion = set.total_samples ? static_cast<double>(set.size()) / set.total_samples : 0.0;
    if (truth_) {
        rec.pseudolabel_accuracy = pseudolabel_metrics(set, *truth_).accuracy;
        rec.pretrained_accuracy = label_accuracy(argmax_rows(pre.probs), *truth_);
    }

    // Finetune the extractor on the pseudolabeled samples.
    rec.learning_rate = config_.learning_rate(rec.episode);
    optimizer_.learning_rate = rec.learning_rate;
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double total_loss = 0.0;
    std::size_t visited = 0;
    if (!order.empty()) {
        const std::size_t per_pass = (order.size() + config_.batch_size - 1) / config_.batch_size;
        const std::size_t steps = config_.steps_per_episode.value_or(per_pass);
        std::size_t cursor = order.size();
        std::vector<LabeledSample> batch;
        for (std::size_t step = 0; step < steps; ++step) {
            if (cursor >= order.size()) {
                rng_.shuffle(order);
                cursor = 0;
            }
            const std::size_t end = std::min(cursor + config_.batch_size, order.size());
            batch.clear();
            for (std::size_t k = cursor; k < end; ++k) {
                const Pseudolabel& p = set.assigned[order[k]];
                batch.push_back({inputs_.row(p.sample), p.label});
            }
            cursor = end;
            LossAndGradients lg = cross_entropy_grad(model_, batch);
            if (!std::isfinite(lg.loss)) {
                throw NumericalError("non-finite co-learning loss in episode " + std::to_string(rec.episode));
            }
            lg.grads *= config_.loss_coefficient;
            sgd_step(model_, lg.grads, optimizer_);
            total_loss += config_.loss_coefficient * lg.loss;
            visited += batch.size();
            ++rec.steps;
        }
        rec.mean_loss = total_loss / static_cast<double>(visited);
    }

    // Refresh the centroids from the updated adaptation branch.
    const Matrix updated = forward_batch(model_, inputs_).probs;
    if (!updated.all_finite()) {
        throw NumericalError("adaptation branch produced non-finite outputs in episode " +
                             std::to_string(rec.episode));
    }
    CentroidOptions opts;
    opts.iterations = config_.centroid_iterations;
    opts.temperature = config_.temperature;
    if (config_.centroid_subset == CentroidSubset::Pseudolabeled && !set.assigned.empty()) {
        opts.subset = set.mask();
    }
    centroids_ = compute_centroids(*bank_, updated, opts);
    if (truth_) rec.adaptation_accuracy = label_accuracy(argmax_rows(updated), *truth_);

    last_set_ = std::move(set);
    records_.push_back(rec);
    return rec;
}

ColearnResult ColearnSession::run() {
    while (records_.size() < config_.episodes) run_episode();
    return {model_, centroids_, records_};
}

ColearnSession initialize(const AdaptationModel& source, std::shared_ptr<const FeatureBank> bank,
                          Matrix target_inputs, ColearnConfig config, std::optional<Labels> truth) {
    return ColearnSession(source, std::move(bank), std::move(target_inputs), std::move(config),
                          std::move(truth));
}

LossAndGradients colearn_loss_term(const AdaptationModel& model, const PseudolabelSet& set,
                                   const Matrix& inputs, double coefficient) {
    if (!(coefficient >= 0.0) || !std::isfinite(coefficient)) {
        throw InvalidArgument("co-learning loss coefficient must be nonnegative");
    }
    if (set.total_samples != inputs.rows()) {
        throw InvalidArgument("pseudolabel set covers " + std::to_string(set.total_samples) +
                              " samples, inputs have " + std::to_string(inputs.rows()));
    }
    std::vector<LabeledSample> batch;
    batch.reserve(set.size());
    for (const auto& p : set.assigned) batch.push_back({inputs.row(p.sample), p.label});
    LossAndGradients lg = cross_entropy_grad(model, batch);
    lg.loss *= coefficient;
    lg.grads *= coefficient;
    return lg;
}

}  // namespace colearn
