#include "eefit/forecast.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "eefit/errors.hpp"
#include "eefit/mathutil.hpp"
#include "eefit/nbinom.hpp"
#include "eefit/rng.hpp"

namespace eefit {

namespace {

// Everything needed to roll the conditional mean forward on the full panel:
// nu/phi rows depend only on covariates, the epidemic sum is recomputed from
// the (partly simulated) history.
struct PredictiveContext {
    Eigen::MatrixXd nu, phi; // T x m, full panel
    Eigen::MatrixXd W;       // m x m coupling (identity when absent)
    Eigen::VectorXd u;       // lag weights, length p
    Eigen::VectorXd psi;     // per-unit dispersion
    int p = 0;
    int T = 0, m = 0;
};

PredictiveContext make_context(const FittedModel& fitted, const Dataset& data) {
    PredictiveContext ctx;
    const ParamLayout layout = build_layout(fitted.spec, data);
    const Design design = build_design(fitted.spec, data);
    if (fitted.coeffs.values.size() != layout.size())
        throw std::invalid_argument("fitted coefficients do not match the panel layout");
    const MeanParts parts = evaluate_mean_parts(fitted.spec, layout, design, fitted.coeffs.values);
    ctx.nu = parts.nu;
    ctx.phi = parts.phi;
    ctx.T = design.T;
    ctx.m = design.m;
    ctx.p = fitted.spec.serial_interval.p;
    ctx.u = lag_weights_at(fitted.spec, layout, fitted.coeffs.values);
    if (fitted.spec.spatial.kind == SpatialKind::power_law && ctx.m > 1) {
        SpatialWeightSpec sp = fitted.spec.spatial;
        sp.rho = std::exp(fitted.coeffs.values(layout.log_rho_index));
        ctx.W = spatial_weights(sp, *design.nb);
    } else {
        ctx.W = Eigen::MatrixXd::Identity(ctx.m, ctx.m);
    }
    ctx.psi.resize(ctx.m);
    for (int i = 0; i < ctx.m; ++i)
        ctx.psi(i) = std::exp(fitted.coeffs.values(layout.log_psi_base + (layout.log_psi_count == 1 ? 0 : i)));
    return ctx;
}

// Conditional mean at local history row r (global week row r + t0 - p).
Eigen::VectorXd lambda_row(const PredictiveContext& ctx, const Eigen::MatrixXd& hist, int r, int origin) {
    const int g = r + origin - ctx.p; // 0-based global row
    Eigen::VectorXd A = Eigen::VectorXd::Zero(ctx.m);
    for (int d = 1; d <= ctx.p; ++d) A += ctx.u(d - 1) * hist.row(r - d).transpose();
    Eigen::VectorXd lam(ctx.m);
    const Eigen::VectorXd X = ctx.W.transpose() * A; // X_i = sum_j A_j W(j,i)
    for (int i = 0; i < ctx.m; ++i) lam(i) = ctx.nu(g, i) + ctx.phi(g, i) * X(i);
    return lam;
}

void check_origin(const PredictiveContext& ctx, int origin, int H) {
    if (origin < ctx.p) throw DataError("forecast origin precedes the first week with full lag history");
    if (origin + H > ctx.T) throw DataError("forecast horizon extends past the panel");
}

// Fill the first p rows of a (p + H) x m history buffer with observed counts.
Eigen::MatrixXd seed_history(const Dataset& data, int origin, int p, int H) {
    Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(p + H, data.counts.m());
    for (int r = 0; r < p; ++r) hist.row(r) = data.counts.counts.row(origin - p + r).cast<double>();
    return hist;
}

} // namespace

std::vector<Eigen::MatrixXi> simulate_paths(const FittedModel& fitted, const Dataset& data, int origin, int H,
                                            int N, std::uint64_t seed) {
    if (H < 1 || N < 1) throw ConfigError("need H >= 1 and N >= 1");
    const PredictiveContext ctx = make_context(fitted, data);
    check_origin(ctx, origin, H);

    std::vector<Eigen::MatrixXi> paths(N);
#pragma omp parallel for schedule(static)
    for (int k = 0; k < N; ++k) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(origin), static_cast<std::uint64_t>(k)));
        Eigen::MatrixXd hist = seed_history(data, origin, ctx.p, H);
        Eigen::MatrixXi path(H, ctx.m);
        for (int h = 1; h <= H; ++h) {
            const int r = ctx.p + h - 1;
            const Eigen::VectorXd lam = lambda_row(ctx, hist, r, origin);
            for (int i = 0; i < ctx.m; ++i) {
                const long y = rng.neg_binomial(lam(i), ctx.psi(i));
                path(h - 1, i) = static_cast<int>(y);
                hist(r, i) = static_cast<double>(y);
            }
        }
        paths[k] = std::move(path);
    }
    return paths;
}

ScoreResult logscore_onestep(const FittedModel& fitted, const Dataset& data, int origin,
                             const Eigen::VectorXi& y_obs, bool standardize) {
    const PredictiveContext ctx = make_context(fitted, data);
    check_origin(ctx, origin, 1);
    if (y_obs.size() != ctx.m) throw DataError("observation vector length mismatch");
    Eigen::MatrixXd hist = seed_history(data, origin, ctx.p, 1);
    const Eigen::VectorXd lam = lambda_row(ctx, hist, ctx.p, origin);
    double lp = 0.0;
    for (int i = 0; i < ctx.m; ++i) lp += nb_logpmf(y_obs(i), lam(i), ctx.psi(i));
    ScoreResult res;
    res.score = -lp / (standardize ? ctx.m : 1);
    return res;
}

ScoreResult logscore_rb(const FittedModel& fitted, const Dataset& data, int origin, int h,
                        const Eigen::VectorXi& y_obs, const ForecastConfig& cfg) {
    if (h < 1) throw ConfigError("horizon must be >= 1");
    const PredictiveContext ctx = make_context(fitted, data);
    check_origin(ctx, origin, h);
    if (y_obs.size() != ctx.m) throw DataError("observation vector length mismatch");
    const int N = cfg.n_paths;

    std::vector<double> logf(N);
#pragma omp parallel for schedule(static)
    for (int k = 0; k < N; ++k) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(origin), static_cast<std::uint64_t>(k)));
        Eigen::MatrixXd hist = seed_history(data, origin, ctx.p, h);
        for (int s = 1; s < h; ++s) {
            const int r = ctx.p + s - 1;
            const Eigen::VectorXd lam = lambda_row(ctx, hist, r, origin);
            for (int i = 0; i < ctx.m; ++i) hist(r, i) = static_cast<double>(rng.neg_binomial(lam(i), ctx.psi(i)));
        }
        const Eigen::VectorXd lam = lambda_row(ctx, hist, ctx.p + h - 1, origin);
        double lp = 0.0;
        for (int i = 0; i < ctx.m; ++i) lp += nb_logpmf(y_obs(i), lam(i), ctx.psi(i));
        logf[k] = lp;
    }

    ScoreResult res;
    res.n_paths = N;
    const double lse = logsumexp(logf);
    if (!std::isfinite(lse)) {
        res.score = std::numeric_limits<double>::infinity();
        res.underflow = true;
        return res;
    }
    const double log_mean = lse - std::log(static_cast<double>(N));
    // Delta-method s.e. of log(mean) from the max-shifted weights.
    const double shift = *std::max_element(logf.begin(), logf.end());
    double mean_a = 0.0;
    for (double v : logf) mean_a += std::exp(v - shift);
    mean_a /= N;
    double var_a = 0.0;
    for (double v : logf) {
        const double d = std::exp(v - shift) - mean_a;
        var_a += d * d;
    }
    var_a /= std::max(1, N - 1);
    const double se = std::sqrt(var_a / N) / mean_a;

    const double denom = cfg.standardize ? ctx.m : 1;
    res.score = -log_mean / denom;
    res.mc_se = se / denom;
    return res;
}

ForecastSet rolling_forecasts(const ModelSpec& spec, const Dataset& data, int test_start,
                              const ForecastConfig& cfg, const SampleSink& sink) {
    const int T = data.counts.T();
    const int p = spec.serial_interval.p;
    if (test_start <= p + 2) throw ConfigError("test window must start after a minimal training stretch");
    if (test_start > T) throw ConfigError("test window starts past the end of the panel");

    ForecastSet out;
    out.n_units = data.counts.m();
    out.standardized = cfg.standardize;

    FitOptions fopt;
    fopt.hessian = false;

    FittedModel frozen;
    bool have_frozen = false;
    if (!cfg.refit) {
        frozen = fit_profile(spec, data.head(test_start - 1), fopt);
        have_frozen = true;
    }

    FittedModel prev_fit;
    bool have_prev = false;
    for (int origin = test_start - 1; origin <= T - 1; ++origin) {
        FittedModel fit;
        if (cfg.refit) {
            try {
                fit = fit_profile(spec, data.head(origin), fopt);
                out.origin_notes.push_back(data.counts.week_labels[origin - 1] + ": " +
                                           (fit.convergence.converged ? "converged" : "not converged") + " in " +
                                           std::to_string(fit.convergence.iterations) + " iterations");
            } catch (const std::exception& e) {
                if (cfg.reuse_on_failure && have_prev) {
                    fit = prev_fit;
                    out.origin_notes.push_back(data.counts.week_labels[origin - 1] +
                                               ": fit failed, reusing previous origin (" + e.what() + ")");
                } else {
                    out.failed_origins.push_back(origin);
                    out.origin_notes.push_back(data.counts.week_labels[origin - 1] + ": fit failed, origin excluded (" +
                                               e.what() + ")");
                    continue;
                }
            }
        } else {
            fit = frozen;
        }
        prev_fit = fit;
        have_prev = true;

        const int Hmax = std::min(cfg.horizons, T - origin);
        if (sink && Hmax >= 1) {
            const auto paths = simulate_paths(fit, data, origin, Hmax, cfg.n_paths, cfg.seed);
            sink(origin, data.counts.week_labels[origin - 1], paths);
        }
        for (int h = 1; h <= Hmax; ++h) {
            const Eigen::VectorXi y_obs = data.counts.counts.row(origin + h - 1).transpose();
            ScoreRow row;
            row.origin_week = data.counts.week_labels[origin - 1];
            row.origin = origin;
            row.horizon = h;
            row.seed = cfg.seed;
            if (h == 1) {
                const ScoreResult r = logscore_onestep(fit, data, origin, y_obs, cfg.standardize);
                row.score = r.score;
                // analytic parameters for the one-step predictive distribution
                const ParamLayout layout = build_layout(fit.spec, data);
                const Design design = build_design(fit.spec, data);
                const MeanParts parts = evaluate_mean_parts(fit.spec, layout, design, fit.coeffs.values);
                row.lambda1 = parts.lambda.row(origin).transpose();
                row.psi1.resize(out.n_units);
                for (int i = 0; i < out.n_units; ++i)
                    row.psi1(i) =
                        std::exp(fit.coeffs.values(layout.log_psi_base + (layout.log_psi_count == 1 ? 0 : i)));
            } else {
                const ScoreResult r = logscore_rb(fit, data, origin, h, y_obs, cfg);
                row.score = r.score;
                row.mc_se = r.mc_se;
                row.n_paths = r.n_paths;
                row.underflow = r.underflow;
            }
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

void write_scores_csv(const ForecastSet& fs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scores file: " + path);
    out << "origin_week,horizon,score,mc_se,n_paths,seed\n";
    char buf[64];
    for (const auto& row : fs.rows) {
        std::snprintf(buf, sizeof(buf), "%.10g", row.score);
        out << row.origin_week << ',' << row.horizon << ',' << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.10g", row.mc_se);
        out << buf << ',' << row.n_paths << ',' << row.seed << '\n';
    }
}

} // namespace eefit
