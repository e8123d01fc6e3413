#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "eefit/model.hpp"
#include "eefit/optim.hpp"

namespace eefit {

struct Convergence {
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
    std::vector<int> at_bound; // parameter indices stuck at a box bound
    std::vector<std::string> notes;
};

struct ProfilePoint {
    double x = 0.0;      // transformed weighting parameter
    double kappa = 0.0;  // natural scale
    double loglik = 0.0;
};

struct FittedModel {
    ModelSpec spec; // serial_interval carries the estimated kappa/logits
    CoefficientSet coeffs;
    double loglik = 0.0;
    double aic = 0.0;
    int n_free = 0;
    Eigen::MatrixXd cov;  // inverse observed information, layout order
    Eigen::VectorXd se;   // NaN where unavailable
    Convergence convergence;
    Eigen::VectorXd si_weights;            // normalized lag weights at the optimum
    double kappa_hat = 0.0;                // NaN unless the family is parametric
    std::vector<ProfilePoint> profile;     // grid trace (parametric families)
    int profile_local_maxima = 0;          // interior grid maxima seen during profiling
};

// Joint log likelihood, summed over t = p+1..T (1-based) and all units.
double log_likelihood(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data);

// Hot path: likelihood and (optionally) the analytic gradient over the
// leading non-weighting parameters on a prebuilt design. Entries of `grad`
// in the trailing weighting block are left at zero (the profile treats
// them as fixed).
double log_likelihood_grad(const ModelSpec& spec, const ParamLayout& layout, const Design& design,
                           const Eigen::VectorXd& values, Eigen::VectorXd* grad);

struct InnerFit {
    CoefficientSet coeffs;
    double loglik = 0.0;
    Convergence convergence;
};

// Maximize over regression coefficients, log-rho and log-psi at fixed
// lag weights. `si_values` holds the transformed weighting parameters
// (empty when the layout has none); `warm` optionally supplies a full-length
// starting vector.
InnerFit fit_inner(const ModelSpec& spec, const ParamLayout& layout, const Design& design,
                   const Eigen::VectorXd& si_values, const Eigen::VectorXd* warm = nullptr);
InnerFit fit_inner(const ModelSpec& spec, const Dataset& data, const Eigen::VectorXd& si_values);

struct FitOptions {
    bool hessian = true;
    int grid_points = 21;
    int nm_starts = 5; // random Nelder-Mead starts for the unrestricted family
};

FittedModel fit_profile(const ModelSpec& spec, const Dataset& data, const FitOptions& opt = {});

struct OrderSelection {
    int p = 1;
    std::vector<std::pair<int, double>> aic_trace; // (order, AIC)
    bool flattened = false;                        // parametric stop rule triggered
};

// Scan the lag order; parametric families stop at the first p where the
// AIC change to p+1 falls below 0.1, the unrestricted family minimizes AIC.
OrderSelection select_order(const ModelSpec& spec, const Dataset& data, int p_max,
                            const FitOptions& opt = {});

// Joint covariance from the numerically differentiated log likelihood
// (central differences, step 1e-4 * max(1,|theta_j|)). Parameters stuck at
// a box bound are excluded, with se = NaN and a convergence note.
void hessian_and_se(FittedModel& fitted, const Dataset& data);

} // namespace eefit
