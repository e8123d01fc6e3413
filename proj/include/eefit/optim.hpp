#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace eefit {

using Objective = std::function<double(const Eigen::VectorXd&)>;
// Returns f(x) and fills grad (same length as x).
using ObjectiveGrad = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct Bounds {
    Eigen::VectorXd lower, upper; // +/-inf for unbounded; empty means unbounded

    static Bounds unbounded(int n);
    void clamp(Eigen::VectorXd& x) const;
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;              // projected-gradient sup norm at the solution
    std::vector<int> active_bounds;      // parameter indices stuck at a box bound
    std::vector<std::string> notes;
};

struct BfgsOptions {
    int max_iter = 500;
    double grad_tol = 1e-6; // relative: ||proj grad||_inf <= tol * max(1, |f|)
    double step_tol = 1e-12;
};

// Quasi-Newton minimization with Armijo backtracking, projected onto the box.
// The inverse-Hessian update is skipped when curvature s'y <= 0 and the
// approximation is reset to the identity after a failed line search.
OptimResult minimize_bfgs(const ObjectiveGrad& fg, const Eigen::VectorXd& x0, const Bounds& bounds,
                          const BfgsOptions& opt = {});

// Derivative-free scalar minimization on [a, b] (golden section with
// parabolic interpolation). Returns the minimizer; fills *fmin if given.
double brent_minimize(const std::function<double(double)>& f, double a, double b, double tol = 1e-8,
                      int max_iter = 200, double* fmin = nullptr);

struct NelderMeadOptions {
    int max_iter = 2000;
    double ftol = 1e-9;
    double init_step = 0.5;
};

OptimResult minimize_nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {});

// Central finite differences with per-coordinate step h * max(1, |x_j|).
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-6);
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-4);

} // namespace eefit
