#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "onebit_fl/data.hpp"
#include "onebit_fl/federation.hpp"

namespace onebit {

/// Everything a run needs, as read from a flat `key = value` file.
///
/// Model shape comes from `model` (linear | logistic | mlp) with `dim`,
/// `classes`, `hidden` (comma-separated widths) and `activation`. The
/// dataset is `synthetic`, `idx` or `csv`; file datasets are label-skew
/// partitioned with `shards_per_client` shards per client.
struct ExperimentConfig {
    FederationConfig federation;
    std::string model = "logistic";
    std::size_t dim = 50;
    std::size_t classes = 2;
    std::vector<std::size_t> hidden{256};
    std::string activation = "relu";

    std::string dataset = "synthetic";
    std::size_t clients = 20;
    std::size_t samples_per_client = 500;
    double heterogeneity = 1.0;
    double noise = 0.1;
    std::size_t shards_per_client = 2;
    double test_fraction = 0.2;
    std::string train_path;
    std::string label_path;

    std::string output_dir = "out";
};

/// The recognised keys, sorted.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Throws ConfigError on an unknown key
/// (listing the valid ones) or an unparsable value.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Keys absent from the text keep their defaults. The result is validated.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Rebuilds model and hyperparameters from the flat fields and checks
/// ranges and cross-field consistency. Throws ConfigError; returns soft
/// warnings.
std::vector<std::string> validate_config(ExperimentConfig& config);

/// Every key in sorted order, doubles printed with %.17g. Parsing the echo
/// reproduces the config exactly.
std::string canonical_echo(const ExperimentConfig& config);

/// Generates or loads the data and partitions it across clients. Checks the
/// data against the model before returning.
FederatedDataset build_dataset(const ExperimentConfig& config);

}  // namespace onebit
