#include "colearn/config.hpp"

#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "colearn/binary_io.hpp"

namespace colearn {

namespace {

using json = nlohmann::json;
using ordered = nlohmann::ordered_json;

void only_keys(const json& obj, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + std::string(section));
    }
}

template <typename T>
void read(const json& obj, std::string_view section, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(section) + "." + key + " has the wrong type");
    }
}

void read_count(const json& obj, std::string_view section, const char* key, std::size_t& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(std::string(section) + "." + key + " must be a nonnegative integer");
    out = v.get<std::size_t>();
}

void read_path(const json& obj, const char* key, std::optional<std::filesystem::path>& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) throw ConfigError(std::string("paths.") + key + " must be a string");
    out = obj.at(key).get<std::string>();
}

void parse_synthetic(const json& j, SyntheticSpec& s) {
    only_keys(j, "synthetic", {"classes", "input_dim", "source_per_class", "target_per_class", "separation",
                               "covariance_scale", "shift", "pretrained"});
    read_count(j, "synthetic", "classes", s.classes);
    read_count(j, "synthetic", "input_dim", s.input_dim);
    read_count(j, "synthetic", "source_per_class", s.source_per_class);
    read_count(j, "synthetic", "target_per_class", s.target_per_class);
    read(j, "synthetic", "separation", s.separation);
    read(j, "synthetic", "covariance_scale", s.covariance_scale);
    if (j.contains("shift")) {
        const json& sh = j.at("shift");
        only_keys(sh, "synthetic.shift", {"rotation_angles", "translation", "scale"});
        read(sh, "synthetic.shift", "rotation_angles", s.shift.rotation_angles);
        read(sh, "synthetic.shift", "translation", s.shift.translation);
        read(sh, "synthetic.shift", "scale", s.shift.scale);
    }
    if (j.contains("pretrained")) {
        const json& p = j.at("pretrained");
        only_keys(p, "synthetic.pretrained",
                  {"hidden_dim", "map_dim", "signal_dim", "signal_strength", "noise", "informativeness"});
        read_count(p, "synthetic.pretrained", "hidden_dim", s.pretrained.hidden_dim);
        read_count(p, "synthetic.pretrained", "map_dim", s.pretrained.map_dim);
        read_count(p, "synthetic.pretrained", "signal_dim", s.pretrained.signal_dim);
        read(p, "synthetic.pretrained", "signal_strength", s.pretrained.signal_strength);
        read(p, "synthetic.pretrained", "noise", s.pretrained.noise);
        read(p, "synthetic.pretrained", "informativeness", s.pretrained.informativeness);
    }
}

void parse_colearn(const json& j, ColearnConfig& c) {
    only_keys(j, "colearn", {"scheme", "gamma", "episodes", "batch_size", "lr", "lr_after_decay", "decay_episode",
                             "momentum", "temperature", "centroid_subset", "centroid_iterations",
                             "loss_coefficient", "steps_per_episode", "pretrained_confidence"});
    if (j.contains("scheme")) {
        std::string name;
        read(j, "colearn", "scheme", name);
        try {
            c.scheme.kind = parse_scheme(name);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }
    read(j, "colearn", "gamma", c.scheme.gamma);
    read_count(j, "colearn", "episodes", c.episodes);
    read_count(j, "colearn", "batch_size", c.batch_size);
    read(j, "colearn", "lr", c.lr);
    read(j, "colearn", "lr_after_decay", c.lr_after_decay);
    read_count(j, "colearn", "decay_episode", c.decay_episode);
    read(j, "colearn", "momentum", c.momentum);
    read(j, "colearn", "temperature", c.temperature);
    if (j.contains("centroid_subset")) {
        std::string name;
        read(j, "colearn", "centroid_subset", name);
        c.centroid_subset = parse_centroid_subset(name);
    }
    read_count(j, "colearn", "centroid_iterations", c.centroid_iterations);
    read(j, "colearn", "loss_coefficient", c.loss_coefficient);
    if (j.contains("steps_per_episode") && !j.at("steps_per_episode").is_null()) {
        std::size_t steps = 0;
        read_count(j, "colearn", "steps_per_episode", steps);
        c.steps_per_episode = steps;
    }
    if (j.contains("pretrained_confidence")) {
        std::string name;
        read(j, "colearn", "pretrained_confidence", name);
        c.pretrained_confidence = parse_confidence_source(name);
    }
}

void check_parent_exists(const std::optional<std::filesystem::path>& p, const char* key) {
    if (!p) return;
    const auto parent = p->has_parent_path() ? p->parent_path() : std::filesystem::path(".");
    if (!std::filesystem::is_directory(parent)) {
        throw ConfigError(std::string("paths.") + key + ": directory " + parent.string() + " does not exist");
    }
}

}  // namespace

std::vector<std::size_t> ModelSpec::extractor_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims{input_dim};
    for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(hidden_width);
    dims.push_back(feature_dim);
    return dims;
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    synthetic.seed = s;
    source_train.seed = s + 1;
    colearn.seed = s + 2;
}

void RunConfig::validate() const {
    try {
        synthetic.validate();
        source_train.validate();
        colearn.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (model.hidden_width == 0 || model.feature_dim == 0) throw ConfigError("model dims must be positive");
    if (paths.data_dir && !std::filesystem::is_directory(*paths.data_dir) &&
        !std::filesystem::is_directory(paths.data_dir->has_parent_path() ? paths.data_dir->parent_path()
                                                                         : std::filesystem::path("."))) {
        throw ConfigError("paths.data_dir: " + paths.data_dir->string() + " cannot be created");
    }
    if (paths.model && !std::filesystem::exists(*paths.model)) check_parent_exists(paths.model, "model");
    if (paths.bank && !std::filesystem::exists(*paths.bank)) check_parent_exists(paths.bank, "bank");
    check_parent_exists(paths.metrics, "metrics");
    check_parent_exists(paths.out, "out");
}

RunConfig parse_run_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    only_keys(j, "config", {"seed", "synthetic", "model", "source_train", "colearn", "paths"});

    RunConfig c;
    std::uint64_t seed = c.seed;
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
        seed = j.at("seed").get<std::uint64_t>();
    }
    c.set_seed(seed);
    if (j.contains("synthetic")) parse_synthetic(j.at("synthetic"), c.synthetic);
    if (j.contains("model")) {
        const json& m = j.at("model");
        only_keys(m, "model", {"hidden_width", "hidden_layers", "feature_dim"});
        read_count(m, "model", "hidden_width", c.model.hidden_width);
        read_count(m, "model", "hidden_layers", c.model.hidden_layers);
        read_count(m, "model", "feature_dim", c.model.feature_dim);
    }
    if (j.contains("source_train")) {
        const json& s = j.at("source_train");
        only_keys(s, "source_train", {"epochs", "batch_size", "lr", "momentum", "label_smoothing"});
        read_count(s, "source_train", "epochs", c.source_train.epochs);
        read_count(s, "source_train", "batch_size", c.source_train.batch_size);
        read(s, "source_train", "lr", c.source_train.lr);
        read(s, "source_train", "momentum", c.source_train.momentum);
        read(s, "source_train", "label_smoothing", c.source_train.label_smoothing);
    }
    if (j.contains("colearn")) parse_colearn(j.at("colearn"), c.colearn);
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        only_keys(p, "paths", {"data_dir", "model", "bank", "metrics", "out"});
        read_path(p, "data_dir", c.paths.data_dir);
        read_path(p, "model", c.paths.model);
        read_path(p, "bank", c.paths.bank);
        read_path(p, "metrics", c.paths.metrics);
        read_path(p, "out", c.paths.out);
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    return parse_run_config(read_file(path));
}

std::string run_config_to_json(const RunConfig& c) {
    ordered j;
    j["seed"] = c.seed;
    const auto& s = c.synthetic;
    j["synthetic"] = {{"classes", s.classes},
                      {"input_dim", s.input_dim},
                      {"source_per_class", s.source_per_class},
                      {"target_per_class", s.target_per_class},
                      {"separation", s.separation},
                      {"covariance_scale", s.covariance_scale},
                      {"shift", {{"rotation_angles", s.shift.rotation_angles},
                                 {"translation", s.shift.translation},
                                 {"scale", s.shift.scale}}},
                      {"pretrained", {{"hidden_dim", s.pretrained.hidden_dim},
                                      {"map_dim", s.pretrained.map_dim},
                                      {"signal_dim", s.pretrained.signal_dim},
                                      {"signal_strength", s.pretrained.signal_strength},
                                      {"noise", s.pretrained.noise},
                                      {"informativeness", s.pretrained.informativeness}}}};
    j["model"] = {{"hidden_width", c.model.hidden_width},
                  {"hidden_layers", c.model.hidden_layers},
                  {"feature_dim", c.model.feature_dim}};
    j["source_train"] = {{"epochs", c.source_train.epochs},
                         {"batch_size", c.source_train.batch_size},
                         {"lr", c.source_train.lr},
                         {"momentum", c.source_train.momentum},
                         {"label_smoothing", c.source_train.label_smoothing}};
    const auto& k = c.colearn;
    j["colearn"] = {{"scheme", std::string(to_string(k.scheme.kind))},
                    {"gamma", k.scheme.gamma},
                    {"episodes", k.episodes},
                    {"batch_size", k.batch_size},
                    {"lr", k.lr},
                    {"lr_after_decay", k.lr_after_decay},
                    {"decay_episode", k.decay_episode},
                    {"momentum", k.momentum},
                    {"temperature", k.temperature},
                    {"centroid_subset", std::string(to_string(k.centroid_subset))},
                    {"centroid_iterations", k.centroid_iterations},
                    {"loss_coefficient", k.loss_coefficient},
                    {"steps_per_episode", k.steps_per_episode ? ordered(*k.steps_per_episode) : ordered(nullptr)},
                    {"pretrained_confidence", std::string(to_string(k.pretrained_confidence))}};
    ordered paths = ordered::object();
    auto put = [&](const char* key, const std::optional<std::filesystem::path>& p) {
        if (p) paths[key] = p->string();
    };
    put("data_dir", c.paths.data_dir);
    put("model", c.paths.model);
    put("bank", c.paths.bank);
    put("metrics", c.paths.metrics);
    put("out", c.paths.out);
    j["paths"] = paths;
    return j.dump(2);
}

std::string_view to_string(CentroidSubset s) { return s == CentroidSubset::All ? "all" : "pseudolabeled"; }

std::string_view to_string(ConfidenceSource s) { return s == ConfidenceSource::Sharpened ? "sharpened" : "raw"; }

CentroidSubset parse_centroid_subset(std::string_view name) {
    if (name == "all") return CentroidSubset::All;
    if (name == "pseudolabeled") return CentroidSubset::Pseudolabeled;
    throw ConfigError("centroid subset must be \"all\" or \"pseudolabeled\", got \"" + std::string(name) + "\"");
}

ConfidenceSource parse_confidence_source(std::string_view name) {
    if (name == "sharpened") return ConfidenceSource::Sharpened;
    if (name == "raw") return ConfidenceSource::Raw;
    throw ConfigError("pre-trained confidence must be \"sharpened\" or \"raw\", got \"" + std::string(name) + "\"");
}

}  // namespace colearn
