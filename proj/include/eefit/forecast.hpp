#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eefit/inference.hpp"

namespace eefit {

struct ForecastConfig {
    int horizons = 1;   // H
    int n_paths = 1000; // N
    std::uint64_t seed = 1;
    bool standardize = false;     // divide multivariate scores by m
    bool refit = true;            // rolling: refit at every origin
    bool reuse_on_failure = false; // failed origin reuses the previous fit instead of being dropped
};

struct ScoreResult {
    double score = 0.0; // negatively oriented: lower is better
    double mc_se = 0.0;
    int n_paths = 0;
    bool underflow = false;
};

// N independent paths of length H past `origin` (1-based week index; data
// rows 1..origin are treated as observed history). Deterministic given the
// seed: path k draws from a stream derived from (seed, origin, k).
std::vector<Eigen::MatrixXi> simulate_paths(const FittedModel& fitted, const Dataset& data, int origin, int H,
                                            int N, std::uint64_t seed);

// Analytic one-step log score: the predictive distribution factorizes into
// independent per-unit negative binomials.
ScoreResult logscore_onestep(const FittedModel& fitted, const Dataset& data, int origin,
                             const Eigen::VectorXi& y_obs, bool standardize = false);

// Rao-Blackwellized h-step log score: average the conditional joint pmf of
// y_obs over N simulated intermediate paths, in log space. h = 1 degenerates
// to the analytic score with zero Monte Carlo error.
ScoreResult logscore_rb(const FittedModel& fitted, const Dataset& data, int origin, int h,
                        const Eigen::VectorXi& y_obs, const ForecastConfig& cfg);

struct ScoreRow {
    std::string origin_week;
    int origin = 0; // 1-based week index
    int horizon = 0;
    double score = 0.0;
    double mc_se = 0.0;
    int n_paths = 0;
    std::uint64_t seed = 0;
    bool underflow = false;
    Eigen::VectorXd lambda1, psi1; // analytic parameters, h = 1 rows only
};

struct ForecastSet {
    std::vector<ScoreRow> rows;
    std::vector<int> failed_origins;        // 1-based, excluded from rows
    std::vector<std::string> origin_notes;  // per-origin convergence summaries
    int n_units = 0;
    bool standardized = false;
};

// Called once per origin with the simulated paths (H x m each) when sample
// output is requested.
using SampleSink = std::function<void(int origin, const std::string& origin_week,
                                      const std::vector<Eigen::MatrixXi>& paths)>;

// Rolling-origin evaluation: for each origin t from test_start-1 to T-1,
// fit on weeks 1..t (or freeze the initial fit when cfg.refit is off) and
// score horizons 1..min(H, T-t). Horizon h therefore has n_test - h + 1 rows.
ForecastSet rolling_forecasts(const ModelSpec& spec, const Dataset& data, int test_start,
                              const ForecastConfig& cfg, const SampleSink& sink = nullptr);

void write_scores_csv(const ForecastSet& fs, const std::string& path);

} // namespace eefit
