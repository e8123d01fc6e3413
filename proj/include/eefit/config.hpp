#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "eefit/forecast.hpp"
#include "eefit/inference.hpp"

namespace eefit {

struct SimulateConfig {
    int weeks = 0;     // length of the emitted panel
    int burn_in = 52;  // discarded leading weeks
    std::vector<std::string> units;
    std::map<std::string, double> coefficients; // by layout name, weighting params excluded
    std::string start_label = "2000-W01";
};

struct RunConfig {
    std::string counts_path, neighbourhood_path, populations_path, covariates_path;
    ModelSpec model;
    FitOptions fit;
    int select_order_max = 0; // > 0: choose p on the training window first
    ForecastConfig forecast;
    std::string test_start; // ISO week label or 1-based index (as text)
    bool save_samples = false;
    SimulateConfig simulate;
    std::uint64_t seed = 1;
    std::string output_dir = ".";

    nlohmann::json resolved; // full config with every default filled in
};

// Accepts either a bare config object or a manifest (the "config" key is
// unwrapped), so any manifest reproduces its run.
RunConfig load_config(const std::string& path);
RunConfig config_from_json(const nlohmann::json& j);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::json fitted_to_json(const FittedModel& fm);

Dataset load_dataset(const RunConfig& cfg);

// 1-based week index from an ISO label or decimal index string.
int resolve_week(const CountsPanel& panel, const std::string& label_or_index);

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs, const std::vector<std::string>& notes,
                    const std::string& path);

} // namespace eefit
