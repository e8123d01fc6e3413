#include "ref.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace eefit_ref {

namespace {

std::vector<double> normalize(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (!(s > 0.0)) throw std::runtime_error("reference weights sum to zero");
    for (double& x : v) x /= s;
    return v;
}

} // namespace

std::vector<double> ref_lag_weights_poisson(int p, double kappa) {
    std::vector<double> u(p);
    double fact = 1.0;
    for (int d = 1; d <= p; ++d) {
        if (d > 1) fact *= (d - 1);
        u[d - 1] = std::pow(kappa, d - 1) * std::exp(-kappa) / fact;
    }
    return normalize(u);
}

std::vector<double> ref_lag_weights_triangular(int p, double kappa) {
    std::vector<double> u(p);
    for (int d = 1; d <= p; ++d) u[d - 1] = std::max(1.0 - kappa * d, 0.0);
    return normalize(u);
}

std::vector<double> ref_lag_weights_geometric(int p, double kappa) {
    std::vector<double> u(p);
    for (int d = 1; d <= p; ++d) u[d - 1] = std::pow(1.0 - kappa, d - 1) * kappa;
    return normalize(u);
}

std::vector<double> ref_lag_weights_softmax(int p, const std::vector<double>& logits) {
    if (static_cast<int>(logits.size()) != p - 1) throw std::runtime_error("need p-1 logits");
    std::vector<double> u(p);
    u[0] = 1.0; // exp(0), lag 1 is the reference category
    for (int d = 2; d <= p; ++d) u[d - 1] = std::exp(logits[d - 2]);
    return normalize(u);
}

std::vector<std::vector<double>> ref_power_law_weights(const std::vector<std::vector<int>>& order, double rho) {
    const int m = static_cast<int>(order.size());
    std::vector<std::vector<double>> W(m, std::vector<double>(m, 0.0));
    for (int j = 0; j < m; ++j) {
        double row = 0.0;
        for (int h = 0; h < m; ++h) row += std::pow(order[j][h] + 1.0, -rho);
        for (int i = 0; i < m; ++i) W[j][i] = std::pow(order[j][i] + 1.0, -rho) / row;
    }
    return W;
}

double ref_nb_logpmf(long y, double lambda, double psi) {
    if (psi <= 0.0) return y * std::log(lambda) - lambda - std::lgamma(y + 1.0);
    const double r = 1.0 / psi;
    // gamma ratio as an explicit product: Gamma(y+r)/Gamma(r) = prod (r+k),
    // exact for integer counts and free of large-argument cancellation
    double log_ratio = 0.0;
    for (long k = 0; k < y; ++k) log_ratio += std::log(r + static_cast<double>(k));
    const double pr = psi * lambda / (1.0 + psi * lambda);
    double lp = log_ratio - std::lgamma(y + 1.0) + r * std::log1p(-pr);
    if (y > 0) lp += y * std::log(pr);
    return lp;
}

double ref_nu(const RefModel& mod, int t, int i) {
    double eta = mod.end_intercept[i];
    for (std::size_t c = 0; c < mod.end_cov_coef.size(); ++c) eta += mod.end_cov_coef[c] * mod.end_cov_cols[c][t];
    for (std::size_t k = 0; k < mod.end_sin.size(); ++k) {
        const double arg = 2.0 * M_PI * (k + 1) * (t + 1) / mod.period;
        eta += mod.end_sin[k] * std::sin(arg) + mod.end_cos[k] * std::cos(arg);
    }
    return std::exp(eta);
}

double ref_phi(const RefModel& mod, int t, int i) {
    double eta = mod.epi_intercept[i];
    if (!mod.log_pop.empty()) eta += mod.tau * mod.log_pop[i];
    for (std::size_t c = 0; c < mod.epi_cov_coef.size(); ++c) eta += mod.epi_cov_coef[c] * mod.epi_cov_cols[c][t];
    for (std::size_t k = 0; k < mod.epi_sin.size(); ++k) {
        const double arg = 2.0 * M_PI * (k + 1) * (t + 1) / mod.period;
        eta += mod.epi_sin[k] * std::sin(arg) + mod.epi_cos[k] * std::cos(arg);
    }
    return std::exp(eta);
}

double ref_lambda(const RefModel& mod, const std::vector<std::vector<long>>& Y, int t, int i) {
    const int p = static_cast<int>(mod.u.size());
    const int m = static_cast<int>(mod.end_intercept.size());
    double sum = 0.0;
    for (int d = 1; d <= p; ++d) {
        for (int j = 0; j < m; ++j) {
            const double w = mod.W.empty() ? (j == i ? 1.0 : 0.0) : mod.W[j][i];
            sum += mod.u[d - 1] * w * Y[t - d][j];
        }
    }
    return ref_nu(mod, t, i) + ref_phi(mod, t, i) * sum;
}

double ref_log_likelihood(const RefModel& mod, const std::vector<std::vector<long>>& Y) {
    const int T = static_cast<int>(Y.size());
    const int m = static_cast<int>(mod.end_intercept.size());
    const int p = static_cast<int>(mod.u.size());
    double ll = 0.0;
    for (int t = p; t < T; ++t)
        for (int i = 0; i < m; ++i) ll += ref_nb_logpmf(Y[t][i], ref_lambda(mod, Y, t, i), mod.psi[i]);
    return ll;
}

std::vector<double> ref_ingarch_mean(double alpha, double beta, double gamma, const std::vector<long>& y, int t0,
                                     double lambda_init) {
    const int T = static_cast<int>(y.size());
    std::vector<double> lam(T - t0);
    lam[0] = lambda_init;
    for (int t = t0 + 1; t < T; ++t) lam[t - t0] = alpha + beta * y[t - 1] + gamma * lam[t - t0 - 1];
    return lam;
}

double ref_exhaustive_twostep(double nu1, double phi1, double nu2, double phi2, const std::vector<double>& u,
                              const std::vector<long>& hist, double psi, long y_obs, long cap) {
    const int p = static_cast<int>(u.size());
    double lam1 = nu1;
    for (int d = 1; d <= p; ++d) lam1 += phi1 * u[d - 1] * hist[d - 1];
    double acc = 0.0;
    for (long yp = 0; yp <= cap; ++yp) {
        double lam2 = nu2 + phi2 * u[0] * yp;
        for (int d = 2; d <= p; ++d) lam2 += phi2 * u[d - 1] * hist[d - 2];
        acc += std::exp(ref_nb_logpmf(yp, lam1, psi) + ref_nb_logpmf(y_obs, lam2, psi));
    }
    return acc;
}

double ref_exact_signflip_pvalue(const std::vector<double>& diffs) {
    const int n = static_cast<int>(diffs.size());
    if (n > 20) throw std::runtime_error("exact enumeration limited to 20 pairs");
    double obs = 0.0;
    for (double d : diffs) obs += d;
    obs = std::abs(obs / n);
    long hits = 0;
    const long total = 1L << n;
    for (long mask = 0; mask < total; ++mask) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += (mask >> i) & 1 ? diffs[i] : -diffs[i];
        if (std::abs(s / n) >= obs) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace eefit_ref
