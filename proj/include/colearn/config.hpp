#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "colearn/colearn.hpp"
#include "colearn/data.hpp"
#include "colearn/errors.hpp"

namespace colearn {

/// Bad configuration document or flag value.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// Shape of the adaptation model built by train-source.
struct ModelSpec {
    std::size_t hidden_width = 32;
    std::size_t hidden_layers = 2;
    std::size_t feature_dim = 16;

    /// {input_dim, hidden_width x hidden_layers, feature_dim}
    std::vector<std::size_t> extractor_dims(std::size_t input_dim) const;
};

struct RunPaths {
    std::optional<std::filesystem::path> data_dir;
    std::optional<std::filesystem::path> model;
    std::optional<std::filesystem::path> bank;
    std::optional<std::filesystem::path> metrics;
    std::optional<std::filesystem::path> out;
};

/// Everything one pipeline run needs. A single seed drives all
/// randomness: data uses `seed`, source training `seed + 1`, co-learning
/// `seed + 2`.
struct RunConfig {
    std::uint64_t seed = 7;
    SyntheticSpec synthetic;
    ModelSpec model;
    SourceTrainConfig source_train;
    ColearnConfig colearn;
    RunPaths paths;

    void set_seed(std::uint64_t s);
    /// Throws ConfigError on any invalid knob or unresolvable path.
    void validate() const;
};

/// Missing keys take the documented defaults; unknown keys are rejected.
RunConfig parse_run_config(std::string_view json_text);
/// Throws ConfigError (not IoError) when the file is missing.
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

std::string_view to_string(CentroidSubset s);
std::string_view to_string(ConfidenceSource s);
CentroidSubset parse_centroid_subset(std::string_view name);
ConfidenceSource parse_confidence_source(std::string_view name);

}  // namespace colearn
