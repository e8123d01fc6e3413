#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "eefit/data.hpp"
#include "eefit/weights.hpp"

namespace eefit {

enum class InterceptKind { shared, per_unit };

struct ComponentSpec {
    InterceptKind intercept = InterceptKind::shared;
    int harmonics = 0; // sine/cosine pairs
    std::vector<std::string> covariates;
};

// Log-linear endemic + epidemic mean decomposition with serial-interval
// lag weights and spatial coupling weights.
struct ModelSpec {
    ComponentSpec endemic;
    ComponentSpec epidemic;
    bool gravity = false; // tau * log(population share) in the epidemic predictor
    SerialIntervalSpec serial_interval;
    SpatialWeightSpec spatial;
    bool per_unit_dispersion = false;
    int period = 52;

    void validate() const;
};

// Flat parameter vector layout; names form a bijection onto positions.
struct ParamLayout {
    std::vector<std::string> names;

    int end_intercept_base = -1, end_intercept_count = 0;
    int end_cov_base = -1, end_cov_count = 0;
    int end_harm_base = -1, end_harm_pairs = 0;
    int epi_intercept_base = -1, epi_intercept_count = 0;
    int tau_index = -1;
    int epi_cov_base = -1, epi_cov_count = 0;
    int epi_harm_base = -1, epi_harm_pairs = 0;
    int log_rho_index = -1;
    int log_psi_base = -1, log_psi_count = 0;
    int si_base = -1, si_count = 0; // transformed kappa or logit weights, kept last

    int size() const { return static_cast<int>(names.size()); }
    int n_inner() const { return size() - si_count; } // optimized at fixed weights
    int index_of(const std::string& name) const;
};

struct CoefficientSet {
    ParamLayout layout;
    Eigen::VectorXd values;

    double at(const std::string& name) const { return values(layout.index_of(name)); }
    void set(const std::string& name, double v) { values(layout.index_of(name)) = v; }
};

// Panel-bound evaluation tables (harmonics, covariate columns, counts).
struct Design {
    int T = 0, m = 0;
    Eigen::MatrixXd Y;                   // counts as reals, T x m
    Eigen::MatrixXi Yi;                  // counts, T x m
    Eigen::MatrixXd sin_nu, cos_nu;      // T x K_nu
    Eigen::MatrixXd sin_phi, cos_phi;    // T x K_phi
    Eigen::MatrixXd end_covs, epi_covs;  // T x (#covariates)
    Eigen::VectorXd log_pop_share;       // m when gravity, else empty
    const NeighbourhoodMatrix* nb = nullptr;
};

ParamLayout build_layout(const ModelSpec& spec, const Dataset& data);
Design build_design(const ModelSpec& spec, const Dataset& data);

// A(t,j) = sum_d u_d Y(t-d, j); rows before p are zero.
Eigen::MatrixXd lag_weighted_counts(const Eigen::MatrixXd& Y, const Eigen::VectorXd& u);

struct MeanParts {
    Eigen::MatrixXd nu;      // T x m, defined everywhere
    Eigen::MatrixXd phi;     // T x m
    Eigen::MatrixXd X;       // lag- and space-weighted past counts, rows >= p
    Eigen::MatrixXd X_rho;   // d X / d rho, only when requested
    Eigen::MatrixXd lambda;  // nu + phi .* X, rows >= p
    int first_valid = 0;     // row index p
};

// Full mean evaluation for arbitrary parameter values (serial-interval
// parameters are read from the trailing block when present, otherwise
// spec.serial_interval provides the weights).
MeanParts evaluate_mean_parts(const ModelSpec& spec, const ParamLayout& layout, const Design& design,
                              const Eigen::VectorXd& values, bool need_rho_grad = false);

// Normalized lag weights implied by (spec, values): trailing transformed
// parameters override the spec's stored kappa/logits.
Eigen::VectorXd lag_weights_at(const ModelSpec& spec, const ParamLayout& layout, const Eigen::VectorXd& values);

struct MeanPanel {
    Eigen::MatrixXd lambda;    // T x m, rows < first_valid are NaN
    Eigen::MatrixXd nu;        // endemic part
    Eigen::MatrixXd epidemic;  // lambda - nu
    int first_valid = 0;
};

MeanPanel conditional_mean(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data);

// Scalar predictors, week t = 1..T and unit i = 1..m (1-based as in the
// model formulas).
double linear_predictor_endemic(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data, int t,
                                int i);
double linear_predictor_epidemic(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data, int t,
                                 int i);

} // namespace eefit
