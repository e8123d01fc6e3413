#include "eefit/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eefit {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Bounds Bounds::unbounded(int n) {
    Bounds b;
    b.lower = Eigen::VectorXd::Constant(n, -kInf);
    b.upper = Eigen::VectorXd::Constant(n, kInf);
    return b;
}

void Bounds::clamp(Eigen::VectorXd& x) const {
    if (lower.size() == 0) return;
    for (int j = 0; j < x.size(); ++j) x(j) = std::min(std::max(x(j), lower(j)), upper(j));
}

namespace {

// Zero out gradient components that push against an active bound; what is
// left is the feasible first-order descent information.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Bounds& b) {
    Eigen::VectorXd pg = g;
    if (b.lower.size() == 0) return pg;
    for (int j = 0; j < x.size(); ++j) {
        if (x(j) <= b.lower(j) && g(j) > 0) pg(j) = 0;
        if (x(j) >= b.upper(j) && g(j) < 0) pg(j) = 0;
    }
    return pg;
}

} // namespace

OptimResult minimize_bfgs(const ObjectiveGrad& fg, const Eigen::VectorXd& x0, const Bounds& bounds,
                          const BfgsOptions& opt) {
    const int n = static_cast<int>(x0.size());
    OptimResult res;
    res.x = x0;
    bounds.clamp(res.x);

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n); // inverse-Hessian approximation
    Eigen::VectorXd g(n);
    double f = fg(res.x, g);
    if (!std::isfinite(f)) {
        res.f = f;
        res.notes.push_back("objective not finite at the starting point");
        return res;
    }

    bool just_reset = true;
    int iter = 0;
    for (; iter < opt.max_iter; ++iter) {
        const Eigen::VectorXd pg = projected_gradient(res.x, g, bounds);
        res.grad_norm = pg.lpNorm<Eigen::Infinity>();
        if (res.grad_norm <= opt.grad_tol * std::max(1.0, std::abs(f))) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd d = -(H * pg);
        if (d.dot(pg) >= 0) { // not a descent direction; fall back to steepest descent
            H.setIdentity();
            d = -pg;
            just_reset = true;
        }

        // Backtracking Armijo search on the projected path.
        double alpha = 1.0;
        const double c1 = 1e-4;
        const double slope = pg.dot(d);
        Eigen::VectorXd x_new;
        Eigen::VectorXd g_new(n);
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + alpha * d;
            bounds.clamp(x_new);
            if ((x_new - res.x).lpNorm<Eigen::Infinity>() <= opt.step_tol * std::max(1.0, res.x.lpNorm<Eigen::Infinity>())) break;
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + c1 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (just_reset) {
                res.notes.push_back("line search stalled");
                break;
            }
            H.setIdentity();
            just_reset = true;
            continue;
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const Eigen::VectorXd Hy = H * y;
            const double yHy = y.dot(Hy);
            H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
                 (Hy * s.transpose() + s * Hy.transpose()) / sy;
            just_reset = false;
        } // else: curvature condition violated, keep previous H

        res.x = x_new;
        f = f_new;
        g = g_new;
    }

    res.f = f;
    res.grad = g;
    res.iterations = iter;
    if (!res.converged && iter >= opt.max_iter) res.notes.push_back("iteration limit reached");
    if (bounds.lower.size() > 0)
        for (int j = 0; j < n; ++j)
            if (res.x(j) <= bounds.lower(j) || res.x(j) >= bounds.upper(j)) res.active_bounds.push_back(j);
    return res;
}

double brent_minimize(const std::function<double(double)>& f, double a, double b, double tol, int max_iter,
                      double* fmin) {
    const double gold = 0.3819660112501051;
    double x = a + gold * (b - a), w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0, e = 0;
    for (int iter = 0; iter < max_iter; ++iter) {
        const double xm = 0.5 * (a + b);
        const double tol1 = tol * std::abs(x) + 1e-12;
        const double tol2 = 2 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
        bool parabolic = false;
        if (std::abs(e) > tol1) {
            const double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2 * (q - r);
            if (q > 0) p = -p;
            q = std::abs(q);
            const double e_old = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * e_old) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm > x) ? tol1 : -tol1;
                parabolic = true;
            }
        }
        if (!parabolic) {
            e = (x >= xm) ? a - x : b - x;
            d = gold * e;
        }
        const double u = (std::abs(d) >= tol1) ? x + d : x + ((d > 0) ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    if (fmin) *fmin = fx;
    return x;
}

OptimResult minimize_nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt) {
    const int n = static_cast<int>(x0.size());
    std::vector<Eigen::VectorXd> simplex(n + 1, x0);
    std::vector<double> fs(n + 1);
    for (int j = 0; j < n; ++j) simplex[j + 1](j) += opt.init_step;
    for (int k = 0; k <= n; ++k) fs[k] = f(simplex[k]);

    auto order = [&]() {
        std::vector<int> idx(n + 1);
        for (int k = 0; k <= n; ++k) idx[k] = k;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
        std::vector<Eigen::VectorXd> s2(n + 1);
        std::vector<double> f2(n + 1);
        for (int k = 0; k <= n; ++k) {
            s2[k] = simplex[idx[k]];
            f2[k] = fs[idx[k]];
        }
        simplex.swap(s2);
        fs.swap(f2);
    };

    OptimResult res;
    int iter = 0;
    for (; iter < opt.max_iter; ++iter) {
        order();
        if (std::abs(fs[n] - fs[0]) <= opt.ftol * (std::abs(fs[0]) + opt.ftol)) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < n; ++k) centroid += simplex[k];
        centroid /= n;

        const Eigen::VectorXd xr = centroid + (centroid - simplex[n]);
        const double fr = f(xr);
        if (fr < fs[0]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[n]);
            const double fe = f(xe);
            if (fe < fr) { simplex[n] = xe; fs[n] = fe; }
            else { simplex[n] = xr; fs[n] = fr; }
        } else if (fr < fs[n - 1]) {
            simplex[n] = xr;
            fs[n] = fr;
        } else {
            const Eigen::VectorXd xc = centroid + 0.5 * (simplex[n] - centroid);
            const double fc = f(xc);
            if (fc < fs[n]) {
                simplex[n] = xc;
                fs[n] = fc;
            } else {
                for (int k = 1; k <= n; ++k) {
                    simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0]);
                    fs[k] = f(simplex[k]);
                }
            }
        }
    }
    order();
    res.x = simplex[0];
    res.f = fs[0];
    res.iterations = iter;
    if (!res.converged) res.notes.push_back("iteration limit reached");
    return res;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (int j = 0; j < x.size(); ++j) {
        const double hj = h * std::max(1.0, std::abs(x(j)));
        xp(j) = x(j) + hj;
        const double fp = f(xp);
        xp(j) = x(j) - hj;
        const double fm = f(xp);
        xp(j) = x(j);
        g(j) = (fp - fm) / (2 * hj);
    }
    return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double h) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd H(n, n);
    Eigen::VectorXd step(n);
    for (int j = 0; j < n; ++j) step(j) = h * std::max(1.0, std::abs(x(j)));
    const double f0 = f(x);
    Eigen::VectorXd xp = x;
    for (int j = 0; j < n; ++j) {
        xp(j) = x(j) + step(j);
        const double fp = f(xp);
        xp(j) = x(j) - step(j);
        const double fm = f(xp);
        xp(j) = x(j);
        H(j, j) = (fp - 2 * f0 + fm) / (step(j) * step(j));
    }
    for (int j = 0; j < n; ++j) {
        for (int k = j + 1; k < n; ++k) {
            xp(j) = x(j) + step(j); xp(k) = x(k) + step(k);
            const double fpp = f(xp);
            xp(k) = x(k) - step(k);
            const double fpm = f(xp);
            xp(j) = x(j) - step(j); xp(k) = x(k) + step(k);
            const double fmp = f(xp);
            xp(k) = x(k) - step(k);
            const double fmm = f(xp);
            xp(j) = x(j); xp(k) = x(k);
            H(j, k) = H(k, j) = (fpp - fpm - fmp + fmm) / (4 * step(j) * step(k));
        }
    }
    return H;
}

} // namespace eefit
