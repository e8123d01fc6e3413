#pragma once

// Deliberately naive reference implementations used as test oracles.
// Everything here is written directly from the model formulas with plain
// loops, std::pow and std::lgamma — no code shared with the main library.

#include <vector>

namespace eefit_ref {

std::vector<double> ref_lag_weights_poisson(int p, double kappa);
std::vector<double> ref_lag_weights_triangular(int p, double kappa);
std::vector<double> ref_lag_weights_geometric(int p, double kappa);
std::vector<double> ref_lag_weights_softmax(int p, const std::vector<double>& logits); // logits for lags 2..p

std::vector<std::vector<double>> ref_power_law_weights(const std::vector<std::vector<int>>& order, double rho);

double ref_nb_logpmf(long y, double lambda, double psi);

// Full model description in plain containers. Intercepts are per unit
// (shared intercepts are just repeated values), covariate columns carry
// their own coefficients, harmonics are sin/cos amplitude pairs.
struct RefModel {
    std::vector<double> end_intercept; // size m
    std::vector<std::vector<double>> end_cov_cols;
    std::vector<double> end_cov_coef;
    std::vector<double> end_sin, end_cos;
    std::vector<double> epi_intercept; // size m
    std::vector<std::vector<double>> epi_cov_cols;
    std::vector<double> epi_cov_coef;
    std::vector<double> epi_sin, epi_cos;
    double tau = 0.0;
    std::vector<double> log_pop; // empty = no gravity term
    int period = 52;
    std::vector<double> u;                  // normalized lag weights
    std::vector<std::vector<double>> W;     // m x m coupling; empty = identity
    std::vector<double> psi;                // per unit
};

double ref_nu(const RefModel& mod, int t, int i);
double ref_phi(const RefModel& mod, int t, int i);
double ref_lambda(const RefModel& mod, const std::vector<std::vector<long>>& Y, int t, int i);
double ref_log_likelihood(const RefModel& mod, const std::vector<std::vector<long>>& Y);

// lambda[t0] = lambda_init, lambda[t] = alpha + beta*y[t-1] + gamma*lambda[t-1].
// Returns values for t = t0..T-1.
std::vector<double> ref_ingarch_mean(double alpha, double beta, double gamma, const std::vector<long>& y, int t0,
                                     double lambda_init);

// Exact two-step predictive pmf for a univariate model: marginalize the
// intermediate count y' over 0..cap. hist[0] is the most recent observation.
double ref_exhaustive_twostep(double nu1, double phi1, double nu2, double phi2, const std::vector<double>& u,
                              const std::vector<long>& hist, double psi, long y_obs, long cap);

// Exact two-sided sign-flip p-value over all 2^n patterns (n <= 20 or so).
double ref_exact_signflip_pvalue(const std::vector<double>& diffs);

} // namespace eefit_ref
