#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "colearn/binary_io.hpp"
#include "colearn/colearn.hpp"
#include "colearn/config.hpp"
#include "colearn/data.hpp"
#include "colearn/eval.hpp"
#include "colearn/featurebank.hpp"
#include "colearn/model.hpp"

namespace fs = std::filesystem;
using namespace colearn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

const char* kSourceFile = "source.cfds";
const char* kTargetFile = "target.cfds";
const char* kBankFile = "bank.cfbk";
const char* kTruthFile = "target_truth.csv";

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;

    std::string out_dir;
    std::string data;
    std::string model;
    std::string bank;
    std::string model_features;
    std::string truth;
    std::string metrics;
    std::string out;
    std::string confusion_csv;
    std::size_t bins = 10;

    std::optional<std::string> scheme;
    std::optional<double> gamma;
    std::optional<std::size_t> episodes;
    std::optional<double> lr;
    std::optional<std::size_t> decay_episode;
    std::optional<std::string> centroid_subset;
    std::optional<std::size_t> centroid_iters;
    std::optional<double> temperature;
    std::optional<std::string> pretrained_confidence;
};

RunConfig load_config(const Options& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    c.set_seed(o.seed.value_or(c.seed));
    return c;
}

void apply_colearn_flags(const Options& o, ColearnConfig& k) {
    if (o.scheme) k.scheme.kind = parse_scheme(*o.scheme);
    if (o.gamma) k.scheme.gamma = *o.gamma;
    if (o.episodes) k.episodes = *o.episodes;
    if (o.lr) k.lr = *o.lr;
    if (o.decay_episode) k.decay_episode = *o.decay_episode;
    if (o.centroid_subset) k.centroid_subset = parse_centroid_subset(*o.centroid_subset);
    if (o.centroid_iters) k.centroid_iterations = *o.centroid_iters;
    if (o.temperature) k.temperature = *o.temperature;
    if (o.pretrained_confidence) k.pretrained_confidence = parse_confidence_source(*o.pretrained_confidence);
    try {
        k.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

// flag value, else config path, else empty
fs::path pick(const std::string& flag, const std::optional<fs::path>& from_config) {
    if (!flag.empty()) return flag;
    return from_config.value_or(fs::path{});
}

fs::path require_path(const fs::path& p, const char* flag) {
    if (p.empty()) throw ConfigError(std::string("missing required option ") + flag);
    return p;
}

// --data names either a gen-data directory or a single dataset file.
fs::path dataset_path(const fs::path& data, const char* file_in_dir) {
    return fs::is_directory(data) ? data / file_in_dir : data;
}

Dataset load_any_dataset(const fs::path& path, Domain domain) {
    if (path.extension() == ".csv") return load_dataset_csv(path, domain);
    return load_dataset(path);
}

FeatureBank load_any_bank(const fs::path& path) {
    if (path.extension() == ".csv") return load_bank_csv(path);
    return load_bank(path);
}

std::optional<Labels> find_truth(const std::string& flag, const fs::path& data) {
    if (!flag.empty()) return load_labels_csv(flag);
    if (fs::is_directory(data) && fs::exists(data / kTruthFile)) return load_labels_csv(data / kTruthFile);
    return std::nullopt;
}

std::string checksum(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

int cmd_gen_data(const Options& o) {
    RunConfig c = load_config(o);
    const fs::path dir = require_path(pick(o.out_dir, c.paths.data_dir), "--out-dir");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const SyntheticProblem p = generate(c.synthetic);
    save_dataset(p.source, dir / kSourceFile);
    save_dataset(p.target, dir / kTargetFile);
    save_bank(p.bank, dir / kBankFile);
    save_labels_csv(p.target_truth, dir / kTruthFile);

    std::printf("seed %llu (data %llu, source-train %llu, colearn %llu)\n",
                static_cast<unsigned long long>(c.seed), static_cast<unsigned long long>(c.synthetic.seed),
                static_cast<unsigned long long>(c.source_train.seed),
                static_cast<unsigned long long>(c.colearn.seed));
    for (const char* f : {kSourceFile, kTargetFile, kBankFile, kTruthFile}) {
        std::printf("%-18s %s\n", f, checksum(dir / f).c_str());
    }
    return 0;
}

int cmd_train_source(const Options& o) {
    RunConfig c = load_config(o);
    const fs::path data = require_path(pick(o.data, c.paths.data_dir), "--data");
    const fs::path out = require_path(pick(o.out, c.paths.model), "--out");

    const Dataset source = load_any_dataset(dataset_path(data, kSourceFile), Domain::Source);
    if (!source.labels) throw ConfigError("source dataset " + dataset_path(data, kSourceFile).string() + " has no labels");
    const auto dims = c.model.extractor_dims(source.inputs.cols());
    const AdaptationModel m = train_source(source, dims, c.synthetic.classes, c.source_train);
    save_model(m, out);

    const double src_acc = accuracy(argmax_rows(forward_batch(m, source.inputs).probs), *source.labels);
    std::printf("source accuracy %.4f\n", src_acc);
    if (fs::is_directory(data) && fs::exists(data / kTargetFile)) {
        if (auto truth = find_truth(o.truth, data)) {
            const Dataset target = load_dataset(data / kTargetFile);
            const double tgt_acc = accuracy(argmax_rows(forward_batch(m, target.inputs).probs), *truth);
            std::printf("target accuracy %.4f\n", tgt_acc);
        }
    }
    std::printf("model %s %s\n", out.string().c_str(), checksum(out).c_str());
    return 0;
}

int cmd_colearn(const Options& o) {
    RunConfig c = load_config(o);
    apply_colearn_flags(o, c.colearn);
    const fs::path data = require_path(pick(o.data, c.paths.data_dir), "--data");
    const fs::path model_path = require_path(pick(o.model, c.paths.model), "--model");
    fs::path bank_path = pick(o.bank, c.paths.bank);
    if (bank_path.empty() && fs::is_directory(data)) bank_path = data / kBankFile;
    require_path(bank_path, "--bank");
    const fs::path metrics = pick(o.metrics, c.paths.metrics);
    const fs::path out = pick(o.out, c.paths.out);

    const AdaptationModel source = load_model(model_path);
    auto bank = std::make_shared<const FeatureBank>(load_any_bank(bank_path));
    const Dataset target = load_any_dataset(dataset_path(data, kTargetFile), Domain::Target);
    std::optional<Labels> truth = find_truth(o.truth, data);

    ColearnSession session(source, bank, target.inputs, c.colearn, truth);
    std::ofstream metrics_out;
    if (!metrics.empty()) {
        metrics_out.open(metrics, std::ios::binary | std::ios::trunc);
        if (!metrics_out) throw IoError("cannot open " + metrics.string() + " for writing");
    }
    for (std::size_t e = 0; e < c.colearn.episodes; ++e) {
        const EpisodeRecord r = session.run_episode();
        if (metrics_out.is_open()) {
            metrics_out << to_json_line(r) << '\n';
            metrics_out.flush();
            if (!metrics_out) throw IoError("write to " + metrics.string() + " failed");
        }
        std::printf("episode %2zu  lr %.4g  pseudolabels %zu (%.3f)", r.episode, r.learning_rate,
                    r.pseudolabel_count, r.pseudolabel_proportion);
        if (r.adaptation_accuracy) {
            std::printf("  adapt acc %.4f  pre-trained acc %.4f", *r.adaptation_accuracy, *r.pretrained_accuracy);
        }
        std::printf("\n");
    }
    if (!out.empty()) {
        save_model(session.model(), out);
        std::printf("model %s %s\n", out.string().c_str(), checksum(out).c_str());
    }
    return 0;
}

int cmd_eval(const Options& o) {
    RunConfig c = load_config(o);
    const fs::path data = require_path(pick(o.data, c.paths.data_dir), "--data");
    const AdaptationModel m = load_model(require_path(pick(o.model, c.paths.model), "--model"));
    const Dataset target = load_any_dataset(dataset_path(data, kTargetFile), Domain::Target);
    std::optional<Labels> truth = find_truth(o.truth, data);
    if (!truth) truth = target.labels;
    if (!truth) throw ConfigError("eval needs --truth (or a labeled dataset)");

    const EvalReport r = evaluate_model(m, target.inputs, *truth, o.bins);
    const std::string json = report_to_json(r);
    std::printf("%s\n", json.c_str());
    if (!o.out.empty()) write_file(o.out, json + "\n");
    if (!o.confusion_csv.empty()) write_file(o.confusion_csv, confusion_to_csv(r.confusion));
    return 0;
}

int cmd_oracle(const Options& o) {
    RunConfig c = load_config(o);
    const fs::path data = pick(o.data, c.paths.data_dir);
    fs::path bank_path = pick(o.bank, c.paths.bank);
    if (bank_path.empty() && !data.empty() && fs::is_directory(data)) bank_path = data / kBankFile;
    std::optional<Labels> truth = find_truth(o.truth, data);
    if (!truth) throw ConfigError("oracle needs --truth");
    const std::size_t classes = [&] {
        std::size_t mx = 0;
        for (std::size_t y : *truth) mx = std::max(mx, y);
        return mx + 1;
    }();

    std::optional<double> bank_oracle, source_oracle;
    if (!bank_path.empty()) {
        bank_oracle = oracle_ncc_accuracy(load_any_bank(bank_path), *truth, classes);
        std::printf("bank oracle accuracy %.4f\n", *bank_oracle);
    }
    if (!o.model_features.empty()) {
        source_oracle = oracle_ncc_accuracy(load_any_bank(o.model_features), *truth, classes);
    } else if (!o.model.empty()) {
        const AdaptationModel m = load_model(o.model);
        const Dataset target = load_any_dataset(dataset_path(require_path(data, "--data"), kTargetFile),
                                                Domain::Target);
        source_oracle = oracle_ncc_accuracy(forward_batch(m, target.inputs).features, *truth, classes);
    }
    if (source_oracle) std::printf("model oracle accuracy %.4f\n", *source_oracle);
    if (!bank_oracle && !source_oracle) throw ConfigError("oracle needs --bank, --model-features or --model");
    if (bank_oracle && source_oracle) {
        std::printf("target compatibility ratio %.4f\n", *source_oracle / *bank_oracle);
    }
    return 0;
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config, "JSON run configuration (flags override it)");
    sub->add_option("--seed", o.seed, "Run seed; data uses seed, source training seed+1, co-learning seed+2 (default 7)");
}

void add_colearn_flags(CLI::App* sub, Options& o) {
    sub->add_option("--scheme", o.scheme, "Pseudolabeling scheme (default match-or-conf)")
        ->check(CLI::IsMember({"match-or-conf", "self-conf", "other-conf", "match", "match-and-conf"}));
    sub->add_option("--gamma", o.gamma, "Confidence threshold, strict > (default 0.5; 0.1 suits a weak source model)");
    sub->add_option("--episodes", o.episodes, "Co-learning episodes (default 15)");
    sub->add_option("--lr", o.lr, "Learning rate before decay (default 0.01; 0.001 afterwards)");
    sub->add_option("--decay-episode", o.decay_episode, "Last episode at the initial learning rate (default 10)");
    sub->add_option("--centroid-subset", o.centroid_subset, "Samples that form centroids (default all)")
        ->check(CLI::IsMember({"all", "pseudolabeled"}));
    sub->add_option("--centroid-iters", o.centroid_iters, "Centroid refinement iterations (default 1)");
    sub->add_option("--temperature", o.temperature, "Pre-trained branch sharpening temperature (default 0.01)");
    sub->add_option("--pretrained-confidence", o.pretrained_confidence,
                    "Confidence of the pre-trained branch: sharpened or raw (default sharpened)")
        ->check(CLI::IsMember({"sharpened", "raw"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-learning source-free domain adaptation on feature banks"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic source/target datasets, bank and truth");
    add_common(gen, o);
    gen->add_option("--out-dir", o.out_dir, "Output directory");

    auto* train = app.add_subcommand("train-source", "Train and checkpoint the source model");
    add_common(train, o);
    train->add_option("--data", o.data, "gen-data directory or labeled source dataset");
    train->add_option("--out", o.out, "Model checkpoint to write");
    train->add_option("--truth", o.truth, "Target truth CSV (for the printed target accuracy)");

    auto* co = app.add_subcommand("colearn", "Adapt a source model with the pre-trained branch");
    add_common(co, o);
    co->add_option("--model", o.model, "Source model checkpoint");
    co->add_option("--bank", o.bank, "Pre-trained feature bank (default <data>/bank.cfbk)");
    co->add_option("--data", o.data, "gen-data directory or target dataset");
    co->add_option("--truth", o.truth, "Target truth CSV; adds accuracies to the records");
    co->add_option("--metrics", o.metrics, "JSON-lines episode records");
    co->add_option("--out", o.out, "Adapted model checkpoint");
    add_colearn_flags(co, o);

    auto* ev = app.add_subcommand("eval", "Evaluate a model on target data");
    add_common(ev, o);
    ev->add_option("--model", o.model, "Model checkpoint");
    ev->add_option("--data", o.data, "gen-data directory or target dataset");
    ev->add_option("--truth", o.truth, "Target truth CSV");
    ev->add_option("--bins", o.bins, "Confidence histogram bins (default 10)")->check(CLI::PositiveNumber);
    ev->add_option("--out", o.out, "Also write the JSON report here");
    ev->add_option("--confusion-csv", o.confusion_csv, "Write the confusion matrix as CSV");

    auto* orc = app.add_subcommand("oracle", "Oracle NCC accuracy and target compatibility ratio");
    add_common(orc, o);
    orc->add_option("--bank", o.bank, "Pre-trained feature bank");
    orc->add_option("--model-features", o.model_features, "Source-model features of the target, as a bank file");
    orc->add_option("--model", o.model, "Source model; features are computed on --data");
    orc->add_option("--data", o.data, "gen-data directory or target dataset");
    orc->add_option("--truth", o.truth, "Target truth CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (train->parsed()) return cmd_train_source(o);
        if (co->parsed()) return cmd_colearn(o);
        if (ev->parsed()) return cmd_eval(o);
        return cmd_oracle(o);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DegenerateInput& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DegenerateClass& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}
