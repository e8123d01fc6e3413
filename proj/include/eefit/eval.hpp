#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "eefit/forecast.hpp"

namespace eefit {

struct ResidualPanel {
    Eigen::MatrixXd r; // T x m, NaN before first_valid
    int first_valid = 0;
};

// Pearson residuals (Y - lambda)/sqrt(lambda + psi*lambda^2). The flag
// drops the square root from the denominator (a variant sometimes printed
// in the literature; off by default).
ResidualPanel pearson_residuals(const FittedModel& fitted, const Dataset& data, bool no_sqrt = false);

struct AcfResult {
    Eigen::MatrixXd acf;                     // (max_lag+1) x m, lag 0 row is all ones
    double band = 0.0;                       // +-1.96/sqrt(n)
    std::vector<std::vector<int>> crossings; // per unit: lags with |acf| > band
    int n = 0;                               // residuals per unit
};

AcfResult residual_acf(const ResidualPanel& resid, int max_lag);

// Paired sign-flip permutation test for mean(a - b) = 0; two-sided,
// add-one smoothed: p = (1 + #{|perm| >= |obs|}) / (1 + n_perm).
double permutation_test(const std::vector<double>& a, const std::vector<double>& b, int n_perm,
                        std::uint64_t seed);

struct ScoreFile {
    std::string label;
    std::vector<ScoreRow> rows; // only origin_week/horizon/score are used
};

ScoreFile read_scores_csv(const std::string& path, const std::string& label);

struct ComparisonRow {
    std::string label;
    int horizon = 0;
    double mean_score = 0.0;
    double mean_diff = 0.0; // model minus baseline; negative = improvement
    double p_value = 1.0;
    int n = 0;
};

struct ComparisonReport {
    std::string baseline;
    std::vector<ComparisonRow> rows;
};

// Mean-score differences of every file against the named baseline, per
// horizon, with permutation p-values. Series must align exactly on
// (origin_week, horizon); misalignment is a hard error listing the rows.
ComparisonReport compare_models(const std::vector<ScoreFile>& files, const std::string& baseline_label,
                                int n_perm = 9999, std::uint64_t seed = 1);

void write_comparison_csv(const ComparisonReport& report, const std::string& path);
std::string format_comparison_table(const ComparisonReport& report);

} // namespace eefit
