#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "blockloc/eval.hpp"

namespace blockloc {

/// Threshold grids for roc sweeps.
struct SweepGrid {
    std::vector<double> delta;
    std::vector<double> mu;
    std::vector<int> phi;  ///< used instead of mu when the baseline gate is on
};

/// Size caps for the exhaustive-search comparison harness.
struct OracleParams {
    int instances = 200;
    int num_tx = 2;
    int num_rx = 2;
    int max_targets = 2;
    int max_mpcs = 3;        ///< per-channel peak cap for generated instances
    long guard = 10'000'000; ///< enumeration size guard
};

/// Fully resolved run configuration: file values, then command-line
/// overrides, then defaults.
struct RunConfig {
    EnsembleParams ens{};
    bool size_gate = false;  ///< gate by peak count instead of prior score
    int phi = -1;
    SweepGrid sweep{};
    OracleParams oracle{};
    std::string output_dir = ".";
};

RunConfig default_config();

/// Parses a JSON config file into `cfg`.  Unknown keys anywhere in the tree
/// and type mismatches raise ConfigError naming the offending key; the two
/// required fields are `seed` and `realizations`.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// The resolved configuration echoed back as JSON (embedded in every output
/// file header for reproducibility).
nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace blockloc
