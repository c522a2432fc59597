#include "colearn/eval.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <json.hpp>

#include "colearn/errors.hpp"

namespace colearn {

namespace {

void check_pair(std::span<const std::size_t> preds, std::span<const std::size_t> truth) {
    if (preds.empty() || truth.empty()) throw InvalidArgument("evaluation needs at least one sample");
    if (preds.size() != truth.size()) {
        throw InvalidArgument(std::to_string(preds.size()) + " predictions for " +
                              std::to_string(truth.size()) + " labels");
    }
}

void check_range(std::span<const std::size_t> v, std::size_t num_classes, const char* what) {
    for (std::size_t x : v) {
        if (x >= num_classes) {
            throw InvalidArgument(std::string(what) + " " + std::to_string(x) + " out of range for " +
                                  std::to_string(num_classes) + " classes");
        }
    }
}

}  // namespace

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth) {
    check_pair(preds, truth);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == truth[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Vector per_class_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                          std::size_t num_classes) {
    check_pair(preds, truth);
    check_range(truth, num_classes, "true class");
    std::vector<std::size_t> total(num_classes, 0), hit(num_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++total[truth[i]];
        if (preds[i] == truth[i]) ++hit[truth[i]];
    }
    Vector out(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (total[c] == 0) throw DegenerateClass(c, "absent from the ground truth");
        out[c] = static_cast<double>(hit[c]) / static_cast<double>(total[c]);
    }
    return out;
}

double mean_per_class_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                               std::size_t num_classes) {
    const Vector pc = per_class_accuracy(preds, truth, num_classes);
    double s = 0.0;
    for (double v : pc) s += v;
    return s / static_cast<double>(pc.size());
}

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < num_classes; ++c) t += at(c, c);
    return t;
}

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                          std::size_t num_classes) {
    check_pair(preds, truth);
    check_range(truth, num_classes, "true class");
    check_range(preds, num_classes, "predicted class");
    ConfusionMatrix cm{num_classes, std::vector<std::uint64_t>(num_classes * num_classes, 0)};
    for (std::size_t i = 0; i < preds.size(); ++i) ++cm.counts[truth[i] * num_classes + preds[i]];
    return cm;
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
    std::string out = "truth";
    for (std::size_t p = 0; p < cm.num_classes; ++p) out += ",pred_" + std::to_string(p);
    out += '\n';
    for (std::size_t t = 0; t < cm.num_classes; ++t) {
        out += std::to_string(t);
        for (std::size_t p = 0; p < cm.num_classes; ++p) out += "," + std::to_string(cm.at(t, p));
        out += '\n';
    }
    return out;
}

std::size_t confidence_bin(double confidence, std::size_t bins) {
    if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw InvalidArgument("confidence " + std::to_string(confidence) + " outside [0, 1]");
    }
    const double scaled = std::ceil(confidence * static_cast<double>(bins));
    if (scaled <= 1.0) return 0;
    return std::min(static_cast<std::size_t>(scaled) - 1, bins - 1);
}

ConfidenceHistogram confidence_histogram(const Matrix& probs, std::span<const std::size_t> truth,
                                         std::size_t bins) {
    if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
    if (probs.rows() != truth.size()) {
        throw InvalidArgument("histogram: " + std::to_string(probs.rows()) + " probability rows for " +
                              std::to_string(truth.size()) + " labels");
    }
    ConfidenceHistogram h;
    h.edges.resize(bins + 1);
    for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = static_cast<double>(k) / static_cast<double>(bins);
    h.correct.assign(bins, 0);
    h.incorrect.assign(bins, 0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const std::size_t pred = argmax(probs.row(i));
        const std::size_t bin = confidence_bin(probs(i, pred), bins);
        ++(pred == truth[i] ? h.correct : h.incorrect)[bin];
    }
    return h;
}

double target_compatibility_ratio(const AdaptationModel& source_model, const FeatureBank& bank,
                                  const Matrix& target_inputs, std::span<const std::size_t> truth) {
    if (target_inputs.rows() != bank.size()) {
        throw InvalidArgument("target inputs and bank differ in sample count");
    }
    const std::size_t classes = source_model.num_classes();
    const Matrix features = forward_batch(source_model, target_inputs).features;
    const double source_oracle = oracle_ncc_accuracy(features, truth, classes);
    const double bank_oracle = oracle_ncc_accuracy(bank, truth, classes);
    return source_oracle / bank_oracle;
}

EvalReport evaluate_model(const AdaptationModel& model, const Matrix& inputs,
                          std::span<const std::size_t> truth, std::size_t bins) {
    const std::size_t classes = model.num_classes();
    const Matrix probs = forward_batch(model, inputs).probs;
    const Labels preds = argmax_rows(probs);
    EvalReport r;
    r.num_samples = inputs.rows();
    r.accuracy = accuracy(preds, truth);
    r.per_class_accuracy = per_class_accuracy(preds, truth, classes);
    r.mean_per_class_accuracy = mean_per_class_accuracy(preds, truth, classes);
    r.confusion = confusion(preds, truth, classes);
    r.histogram = confidence_histogram(probs, truth, bins);
    return r;
}

std::string report_to_json(const EvalReport& r, int indent) {
    nlohmann::ordered_json j;
    j["schema_version"] = EvalReport::kSchemaVersion;
    j["num_samples"] = r.num_samples;
    j["accuracy"] = r.accuracy;
    j["mean_per_class_accuracy"] = r.mean_per_class_accuracy;
    j["per_class_accuracy"] = r.per_class_accuracy;
    j["confusion"] = {{"num_classes", r.confusion.num_classes}, {"counts", r.confusion.counts}};
    j["histogram"] = {{"edges", r.histogram.edges},
                      {"correct", r.histogram.correct},
                      {"incorrect", r.histogram.incorrect}};
    return j.dump(indent);
}

EvalReport report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("schema_version").get<int>() != EvalReport::kSchemaVersion) {
            throw FormatError(0, "unsupported report schema version");
        }
        EvalReport r;
        r.num_samples = j.at("num_samples").get<std::size_t>();
        r.accuracy = j.at("accuracy").get<double>();
        r.mean_per_class_accuracy = j.at("mean_per_class_accuracy").get<double>();
        r.per_class_accuracy = j.at("per_class_accuracy").get<Vector>();
        r.confusion.num_classes = j.at("confusion").at("num_classes").get<std::size_t>();
        r.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::uint64_t>>();
        r.histogram.edges = j.at("histogram").at("edges").get<std::vector<double>>();
        r.histogram.correct = j.at("histogram").at("correct").get<std::vector<std::uint64_t>>();
        r.histogram.incorrect = j.at("histogram").at("incorrect").get<std::vector<std::uint64_t>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(0, std::string("bad report JSON: ") + e.what());
    }
}

}  // namespace colearn
