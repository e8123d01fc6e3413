#include "eefit/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "eefit/errors.hpp"
#include "eefit/mathutil.hpp"
#include "eefit/rng.hpp"

namespace eefit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLogPsiFloor = -18.420680743952367; // log(1e-8): Poisson limit
constexpr double kLogPsiCeil = 15.0;
constexpr double kEpiFloor = -20.0; // epidemic intercept floor: component vanishes
constexpr double kCoefBox = 35.0;
constexpr double kLogRhoBox = 20.0;

// Per-dispersion recurrence tables: lg[y] = lgamma(y+r) - lgamma(r),
// dgs[y] = digamma(y+r) - digamma(r), filled up to the panel maximum count.
struct DispTables {
    double psi = 0.0, r = 0.0;
    std::vector<double> lg, dgs;
};

DispTables make_tables(double log_psi, int ymax) {
    DispTables tb;
    tb.psi = std::exp(log_psi);
    tb.r = 1.0 / tb.psi;
    tb.lg.assign(ymax + 1, 0.0);
    tb.dgs.assign(ymax + 1, 0.0);
    for (int y = 0; y < ymax; ++y) {
        tb.lg[y + 1] = tb.lg[y] + std::log(tb.r + y);
        tb.dgs[y + 1] = tb.dgs[y] + 1.0 / (tb.r + y);
    }
    return tb;
}

} // namespace

double log_likelihood_grad(const ModelSpec& spec, const ParamLayout& layout, const Design& design,
                           const Eigen::VectorXd& values, Eigen::VectorXd* grad) {
    const int T = design.T, m = design.m, p = spec.serial_interval.p;
    if (T <= p) throw DataError("panel too short: need more weeks than the lag order");
    const bool want_grad = grad != nullptr;
    const MeanParts parts =
        evaluate_mean_parts(spec, layout, design, values, want_grad && layout.log_rho_index >= 0);

    const int ymax = design.Yi.maxCoeff();
    std::vector<DispTables> tabs;
    for (int k = 0; k < layout.log_psi_count; ++k)
        tabs.push_back(make_tables(values(layout.log_psi_base + k), ymax));
    std::vector<double> lfact(ymax + 1, 0.0);
    for (int y = 0; y < ymax; ++y) lfact[y + 1] = lfact[y] + std::log(y + 1.0);
    const double rho = layout.log_rho_index >= 0 ? std::exp(values(layout.log_rho_index)) : 0.0;

    // Row-wise partials with a serial final reduction keep the result
    // independent of the number of worker threads.
    std::vector<double> row_ll(T, 0.0);
    Eigen::MatrixXd G;
    if (want_grad) {
        grad->setZero(layout.size());
        G = Eigen::MatrixXd::Zero(layout.size(), T);
    }
    std::atomic<bool> bad{false};

#pragma omp parallel for schedule(static)
    for (int t = p; t < T; ++t) {
        if (bad.load(std::memory_order_relaxed)) continue;
        double acc = 0.0;
        double* gcol = want_grad ? G.col(t).data() : nullptr;
        for (int i = 0; i < m; ++i) {
            const double lam = parts.lambda(t, i);
            if (!(lam > 0.0) || !std::isfinite(lam)) {
                bad.store(true, std::memory_order_relaxed);
                break;
            }
            const DispTables& tb = tabs[layout.log_psi_count == 1 ? 0 : i];
            const int y = design.Yi(t, i);
            const double c1 = std::log1p(tb.psi * lam);
            double lp = tb.lg[y] - lfact[y] - tb.r * c1;
            if (y > 0) lp += y * (std::log(tb.psi * lam) - c1);
            acc += lp;
            if (want_grad) {
                const double dldlam = y / lam - (y + tb.r) / (tb.r + lam);
                const double g_end = dldlam * parts.nu(t, i);
                const double g_epi = dldlam * parts.phi(t, i) * parts.X(t, i);
                gcol[layout.end_intercept_base + (layout.end_intercept_count == 1 ? 0 : i)] += g_end;
                for (int c = 0; c < layout.end_cov_count; ++c)
                    gcol[layout.end_cov_base + c] += g_end * design.end_covs(t, c);
                for (int k = 0; k < layout.end_harm_pairs; ++k) {
                    gcol[layout.end_harm_base + 2 * k] += g_end * design.sin_nu(t, k);
                    gcol[layout.end_harm_base + 2 * k + 1] += g_end * design.cos_nu(t, k);
                }
                gcol[layout.epi_intercept_base + (layout.epi_intercept_count == 1 ? 0 : i)] += g_epi;
                if (layout.tau_index >= 0) gcol[layout.tau_index] += g_epi * design.log_pop_share(i);
                for (int c = 0; c < layout.epi_cov_count; ++c)
                    gcol[layout.epi_cov_base + c] += g_epi * design.epi_covs(t, c);
                for (int k = 0; k < layout.epi_harm_pairs; ++k) {
                    gcol[layout.epi_harm_base + 2 * k] += g_epi * design.sin_phi(t, k);
                    gcol[layout.epi_harm_base + 2 * k + 1] += g_epi * design.cos_phi(t, k);
                }
                if (layout.log_rho_index >= 0)
                    gcol[layout.log_rho_index] += dldlam * parts.phi(t, i) * parts.X_rho(t, i) * rho;
                gcol[layout.log_psi_base + (layout.log_psi_count == 1 ? 0 : i)] +=
                    -tb.r * (tb.dgs[y] - c1) + (y - lam) / (1.0 + tb.psi * lam);
            }
        }
        row_ll[t] = acc;
    }

    if (bad.load()) return kNegInf;
    double ll = 0.0;
    for (int t = p; t < T; ++t) ll += row_ll[t];
    if (want_grad)
        for (int t = p; t < T; ++t) *grad += G.col(t);
    return ll;
}

double log_likelihood(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data) {
    const ParamLayout layout = build_layout(spec, data);
    if (coeffs.values.size() != layout.size()) throw std::invalid_argument("coefficient vector length mismatch");
    const Design design = build_design(spec, data);
    return log_likelihood_grad(spec, layout, design, coeffs.values, nullptr);
}

namespace {

Eigen::VectorXd default_start(const ParamLayout& layout, const Design& design) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(layout.size());
    if (layout.end_intercept_count == 1) {
        full(layout.end_intercept_base) = std::log(std::max(design.Y.mean(), 0.1));
    } else {
        for (int i = 0; i < layout.end_intercept_count; ++i)
            full(layout.end_intercept_base + i) = std::log(std::max(design.Y.col(i).mean(), 0.1));
    }
    for (int k = 0; k < layout.log_psi_count; ++k) full(layout.log_psi_base + k) = std::log(0.1);
    return full;
}

Bounds inner_bounds(const ParamLayout& layout) {
    const int n = layout.n_inner();
    Bounds b;
    b.lower = Eigen::VectorXd::Constant(n, -kCoefBox);
    b.upper = Eigen::VectorXd::Constant(n, kCoefBox);
    for (int i = 0; i < layout.epi_intercept_count; ++i) b.lower(layout.epi_intercept_base + i) = kEpiFloor;
    if (layout.log_rho_index >= 0) {
        b.lower(layout.log_rho_index) = -kLogRhoBox;
        b.upper(layout.log_rho_index) = kLogRhoBox;
    }
    for (int k = 0; k < layout.log_psi_count; ++k) {
        b.lower(layout.log_psi_base + k) = kLogPsiFloor;
        b.upper(layout.log_psi_base + k) = kLogPsiCeil;
    }
    return b;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

} // namespace

InnerFit fit_inner(const ModelSpec& spec, const ParamLayout& layout, const Design& design,
                   const Eigen::VectorXd& si_values, const Eigen::VectorXd* warm) {
    if (si_values.size() != layout.si_count) throw std::invalid_argument("serial-interval parameter count mismatch");
    const int n = layout.size();
    const int n_in = layout.n_inner();

    Eigen::VectorXd full = (warm && warm->size() == n) ? *warm : default_start(layout, design);
    for (int k = 0; k < layout.si_count; ++k) full(layout.si_base + k) = si_values(k);

    Eigen::VectorXd gz(n);
    const ObjectiveGrad fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) -> double {
        Eigen::VectorXd point = full;
        point.head(n_in) = x;
        const double ll = log_likelihood_grad(spec, layout, design, point, &gz);
        g = -gz.head(n_in);
        return -ll;
    };

    const OptimResult res = minimize_bfgs(fg, full.head(n_in), inner_bounds(layout), {});

    // The likelihood flattens exponentially as φ or ψ head for zero, so the
    // optimizer can meet its gradient tolerance far from the box. A floored
    // coefficient whose snap costs < 1e-8 loglik is unidentified below that
    // scale; report the floor instead of the stall point.
    Eigen::VectorXd xin = res.x;
    double fbest = res.f;
    std::vector<int> active = res.active_bounds;
    Eigen::VectorXd gtmp(n_in);
    const auto try_floor = [&](int j, double floor_v) {
        if (xin(j) <= floor_v + 1e-9) return;
        Eigen::VectorXd trial = xin;
        trial(j) = floor_v;
        const double ft = fg(trial, gtmp);
        if (ft <= fbest + 1e-8) {
            xin = trial;
            fbest = ft;
            active.push_back(j);
        }
    };
    for (int i = 0; i < layout.epi_intercept_count; ++i) try_floor(layout.epi_intercept_base + i, kEpiFloor);
    for (int k = 0; k < layout.log_psi_count; ++k) try_floor(layout.log_psi_base + k, kLogPsiFloor);

    InnerFit out;
    out.coeffs.layout = layout;
    out.coeffs.values = full;
    out.coeffs.values.head(n_in) = xin;
    out.loglik = -fbest;
    out.convergence.converged = res.converged;
    out.convergence.iterations = res.iterations;
    out.convergence.grad_norm = res.grad_norm;
    out.convergence.notes = res.notes;
    for (int j : active) {
        out.convergence.at_bound.push_back(j);
        std::string note = "parameter at bound: " + layout.names[j];
        if (starts_with(layout.names[j], "disp.log_psi") && xin(j) <= kLogPsiFloor + 1e-9)
            note += " (dispersion at its floor: Poisson limit)";
        if (starts_with(layout.names[j], "epi.intercept") && xin(j) <= kEpiFloor + 1e-9)
            note += " (epidemic component vanishes)";
        out.convergence.notes.push_back(note);
    }
    return out;
}

InnerFit fit_inner(const ModelSpec& spec, const Dataset& data, const Eigen::VectorXd& si_values) {
    const ParamLayout layout = build_layout(spec, data);
    const Design design = build_design(spec, data);
    return fit_inner(spec, layout, design, si_values, nullptr);
}

namespace {

void assemble(FittedModel& fm, const InnerFit& fit) {
    fm.coeffs = fit.coeffs;
    fm.loglik = fit.loglik;
    fm.convergence = fit.convergence;
}

struct BestFit {
    double loglik = kNegInf;
    double x = 0.0;
    InnerFit fit;
};

} // namespace

FittedModel fit_profile(const ModelSpec& spec, const Dataset& data, const FitOptions& opt) {
    const ParamLayout layout = build_layout(spec, data);
    const Design design = build_design(spec, data);
    const auto family = spec.serial_interval.family;

    FittedModel fm;
    fm.spec = spec;
    fm.kappa_hat = kNaN;

    if (layout.si_count == 0) {
        // Fixed weights, or order 1 where every family degenerates to lag 1.
        assemble(fm, fit_inner(spec, layout, design, Eigen::VectorXd()));
        if (spec.serial_interval.parametric() && spec.serial_interval.p == 1)
            fm.convergence.notes.push_back("order 1: weighting parameter unidentifiable, weights fixed at lag 1");
    } else if (spec.serial_interval.parametric()) {
        const double lo = family == SiFamily::shifted_poisson ? -3.0 : -5.0;
        const double hi = -lo;
        const int npts = std::max(5, opt.grid_points);

        Eigen::VectorXd warm;
        bool have_warm = false;
        BestFit best;
        std::vector<ProfilePoint> trace;
        const auto eval = [&](double x) -> double {
            Eigen::VectorXd si(1);
            si << x;
            InnerFit f = fit_inner(spec, layout, design, si, have_warm ? &warm : nullptr);
            warm = f.coeffs.values;
            have_warm = true;
            trace.push_back({x, kappa_from_real(family, x), f.loglik});
            if (f.loglik > best.loglik) best = {f.loglik, x, std::move(f)};
            return -trace.back().loglik;
        };

        std::vector<double> xs(npts), lls(npts);
        for (int k = 0; k < npts; ++k) {
            xs[k] = lo + (hi - lo) * k / (npts - 1);
            lls[k] = -eval(xs[k]);
        }
        for (int k = 1; k + 1 < npts; ++k)
            if (lls[k] > lls[k - 1] && lls[k] > lls[k + 1]) ++fm.profile_local_maxima;
        const int b = static_cast<int>(std::max_element(lls.begin(), lls.end()) - lls.begin());
        warm = best.fit.coeffs.values;
        brent_minimize(eval, xs[std::max(0, b - 1)], xs[std::min(npts - 1, b + 1)], 1e-6, 60);

        std::sort(trace.begin(), trace.end(), [](const ProfilePoint& a, const ProfilePoint& c) { return a.x < c.x; });
        fm.profile = std::move(trace);
        fm.kappa_hat = kappa_from_real(family, best.x);
        fm.spec.serial_interval.kappa = fm.kappa_hat;
        assemble(fm, best.fit);
        if (fm.profile_local_maxima > 1)
            fm.convergence.notes.push_back("profile likelihood shows " + std::to_string(fm.profile_local_maxima) +
                                           " local maxima on the seeding grid");
    } else {
        // Unrestricted weights: Nelder-Mead over p-1 logits, multi-start.
        const int q = layout.si_count;

        ModelSpec gspec = spec;
        gspec.serial_interval.family = SiFamily::geometric;
        gspec.serial_interval.kappa = 0.5;
        gspec.serial_interval.logits.resize(0);
        FitOptions gopt = opt;
        gopt.hessian = false;
        const FittedModel gfit = fit_profile(gspec, data, gopt);

        std::vector<Eigen::VectorXd> starts;
        Eigen::VectorXd s0(q);
        for (int d = 2; d <= spec.serial_interval.p; ++d) s0(d - 2) = (d - 1) * std::log1p(-gfit.kappa_hat);
        starts.push_back(s0);
        Rng rng(derive_seed(0xB1A5ED5EEDULL, 1));
        for (int k = 0; k < opt.nm_starts; ++k) {
            Eigen::VectorXd s(q);
            for (int j = 0; j < q; ++j) s(j) = rng.normal();
            starts.push_back(s);
        }

        BestFit best;
        for (const auto& start : starts) {
            Eigen::VectorXd warm;
            bool have_warm = false;
            double local_best = kNegInf;
            InnerFit local_fit;
            const Objective f = [&](const Eigen::VectorXd& s) -> double {
                InnerFit ft = fit_inner(spec, layout, design, s, have_warm ? &warm : nullptr);
                const double ll = ft.loglik;
                if (ll > local_best) {
                    local_best = ll;
                    warm = ft.coeffs.values;
                    have_warm = true;
                    local_fit = std::move(ft);
                }
                return -ll;
            };
            NelderMeadOptions nm;
            nm.max_iter = 300 + 100 * q;
            nm.ftol = 1e-8;
            minimize_nelder_mead(f, start, nm);
            if (local_best > best.loglik) best = {local_best, 0.0, std::move(local_fit)};
        }

        fm.spec.serial_interval.logits = best.fit.coeffs.values.tail(q);
        assemble(fm, best.fit);
    }

    fm.si_weights = lag_weights_at(fm.spec, layout, fm.coeffs.values);
    fm.n_free = layout.size();
    fm.aic = -2.0 * fm.loglik + 2.0 * fm.n_free;
    if (opt.hessian) hessian_and_se(fm, data);
    return fm;
}

namespace {

// Remove the first k weeks so fits of different orders condition on the
// same observation window (AIC values stay comparable).
Dataset drop_first_weeks(const Dataset& d, int k) {
    if (k <= 0) return d;
    Dataset out = d;
    const int T = d.counts.T();
    out.counts.counts = d.counts.counts.bottomRows(T - k).eval();
    out.counts.week_labels.assign(d.counts.week_labels.begin() + k, d.counts.week_labels.end());
    out.counts.calendar_week.assign(d.counts.calendar_week.begin() + k, d.counts.calendar_week.end());
    out.covariates.columns = d.covariates.columns.bottomRows(T - k).eval();
    return out;
}

} // namespace

OrderSelection select_order(const ModelSpec& spec, const Dataset& data, int p_max, const FitOptions& opt) {
    const int T = data.counts.T();
    if (p_max < 1) throw ConfigError("maximum order must be >= 1");
    if (p_max > T / 4) throw ConfigError("maximum order exceeds the T/4 guard");

    FitOptions o2 = opt;
    o2.hessian = false;
    const auto aic_at = [&](int p) -> double {
        ModelSpec sp = spec;
        sp.serial_interval.p = p;
        if (sp.serial_interval.family == SiFamily::unrestricted)
            sp.serial_interval.logits = Eigen::VectorXd::Zero(std::max(0, p - 1));
        return fit_profile(sp, drop_first_weeks(data, p_max - p), o2).aic;
    };

    OrderSelection sel;
    if (spec.serial_interval.family == SiFamily::fixed) {
        sel.p = 1;
        sel.aic_trace.push_back({1, aic_at(1)});
        return sel;
    }
    if (spec.serial_interval.family == SiFamily::unrestricted) {
        for (int p = 1; p <= p_max; ++p) sel.aic_trace.push_back({p, aic_at(p)});
        sel.p = std::min_element(sel.aic_trace.begin(), sel.aic_trace.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; })
                    ->first;
        return sel;
    }
    double prev = aic_at(1);
    sel.aic_trace.push_back({1, prev});
    sel.p = p_max;
    for (int p = 2; p <= p_max; ++p) {
        const double cur = aic_at(p);
        sel.aic_trace.push_back({p, cur});
        if (std::abs(cur - prev) < 0.1) {
            sel.p = p - 1;
            sel.flattened = true;
            break;
        }
        prev = cur;
    }
    return sel;
}

void hessian_and_se(FittedModel& fitted, const Dataset& data) {
    const ParamLayout layout = build_layout(fitted.spec, data);
    const Design design = build_design(fitted.spec, data);
    const Eigen::VectorXd theta = fitted.coeffs.values;
    const int n = layout.size();

    std::vector<int> free_idx;
    for (int j = 0; j < n; ++j)
        if (std::find(fitted.convergence.at_bound.begin(), fitted.convergence.at_bound.end(), j) ==
            fitted.convergence.at_bound.end())
            free_idx.push_back(j);
    const int nf = static_cast<int>(free_idx.size());

    const Objective f = [&](const Eigen::VectorXd& xs) -> double {
        Eigen::VectorXd full = theta;
        for (int k = 0; k < nf; ++k) full(free_idx[k]) = xs(k);
        return log_likelihood_grad(fitted.spec, layout, design, full, nullptr);
    };
    Eigen::VectorXd theta_sub(nf);
    for (int k = 0; k < nf; ++k) theta_sub(k) = theta(free_idx[k]);

    const Eigen::MatrixXd H = numeric_hessian(f, theta_sub, 1e-4);
    const Eigen::MatrixXd negH = -H;
    Eigen::MatrixXd cov_sub;
    Eigen::LLT<Eigen::MatrixXd> llt(negH);
    if (llt.info() == Eigen::Success) {
        cov_sub = llt.solve(Eigen::MatrixXd::Identity(nf, nf));
        cov_sub = 0.5 * (cov_sub + cov_sub.transpose()).eval();
    } else {
        fitted.convergence.notes.push_back("observed information is not positive definite");
        Eigen::FullPivLU<Eigen::MatrixXd> lu(negH);
        if (lu.isInvertible()) {
            cov_sub = lu.inverse();
            cov_sub = 0.5 * (cov_sub + cov_sub.transpose()).eval();
        } else {
            cov_sub = Eigen::MatrixXd::Constant(nf, nf, kNaN);
        }
    }

    fitted.cov = Eigen::MatrixXd::Constant(n, n, kNaN);
    fitted.se = Eigen::VectorXd::Constant(n, kNaN);
    for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) fitted.cov(free_idx[a], free_idx[b]) = cov_sub(a, b);
    for (int a = 0; a < nf; ++a) {
        const double v = cov_sub(a, a);
        fitted.se(free_idx[a]) = v >= 0.0 ? std::sqrt(v) : kNaN;
    }
    for (int j : fitted.convergence.at_bound)
        fitted.convergence.notes.push_back("standard error unavailable: " + layout.names[j] + " at a box bound");
}

} // namespace eefit
