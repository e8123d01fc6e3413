#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "eefit/optim.hpp"

using namespace eefit;

TEST_SUITE("optim") {

TEST_CASE("bfgs solves a strictly convex quadratic") {
    // f(x) = 0.5 x'Ax - b'x with known positive definite A
    Eigen::MatrixXd A(3, 3);
    A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    Eigen::VectorXd b(3);
    b << 1, -2, 0.5;
    const Eigen::VectorXd xstar = A.ldlt().solve(b);

    ObjectiveGrad fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = A * x - b;
        return 0.5 * x.dot(A * x) - b.dot(x);
    };
    OptimResult res = minimize_bfgs(fg, Eigen::VectorXd::Zero(3), Bounds::unbounded(3));
    CHECK(res.converged);
    CHECK((res.x - xstar).norm() < 1e-6);
    CHECK(res.grad_norm < 1e-5);
}

TEST_CASE("bfgs handles a banana-shaped valley") {
    ObjectiveGrad fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const double a = x(1) - x(0) * x(0);
        g(0) = -400.0 * a * x(0) - 2.0 * (1.0 - x(0));
        g(1) = 200.0 * a;
        return 100.0 * a * a + (1.0 - x(0)) * (1.0 - x(0));
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    OptimResult res = minimize_bfgs(fg, x0, Bounds::unbounded(2));
    CHECK(res.converged);
    CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("bfgs respects box bounds and reports activity") {
    ObjectiveGrad fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g(0) = 2.0 * (x(0) - 3.0);
        return (x(0) - 3.0) * (x(0) - 3.0);
    };
    Bounds bounds;
    bounds.lower = Eigen::VectorXd::Constant(1, -10.0);
    bounds.upper = Eigen::VectorXd::Constant(1, 1.0);
    Eigen::VectorXd x0(1);
    x0 << -5.0;
    OptimResult res = minimize_bfgs(fg, x0, bounds);
    CHECK(res.x(0) == doctest::Approx(1.0));
    REQUIRE(res.active_bounds.size() == 1);
    CHECK(res.active_bounds[0] == 0);
    CHECK(res.converged); // projected gradient is zero at the bound
}

TEST_CASE("brent finds scalar minima") {
    double fmin = 0.0;
    double x = brent_minimize([](double t) { return (t - 1.3) * (t - 1.3) + 0.5; }, -2.0, 4.0, 1e-10, 200, &fmin);
    CHECK(x == doctest::Approx(1.3).epsilon(1e-7));
    CHECK(fmin == doctest::Approx(0.5).epsilon(1e-10));

    // stationarity: -sin t + 0.02 (t - 3) = 0; with t = pi + d this is
    // 1.02 d = -0.02 (pi - 3), so t* = pi - 0.0027764
    double y = brent_minimize([](double t) { return std::cos(t) + 0.01 * (t - 3.0) * (t - 3.0); }, 0.5, 6.0);
    CHECK(y == doctest::Approx(3.1388162).epsilon(1e-5));
}

TEST_CASE("nelder-mead minimizes a smooth function without derivatives") {
    Objective f = [](const Eigen::VectorXd& x) {
        return std::pow(x(0) - 2.0, 2.0) + 2.0 * std::pow(x(1) + 1.0, 2.0) + std::exp(0.1 * x(0) * x(0)) - 1.0;
    };
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
    OptimResult res = minimize_nelder_mead(f, x0);
    // gradient of the exact objective should be near zero at the solution
    const double h = 1e-5;
    Eigen::VectorXd g = numeric_gradient(f, res.x, h);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-3);
    CHECK(res.x(1) == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("numeric gradient matches analytic derivatives") {
    Objective f = [](const Eigen::VectorXd& x) {
        return std::sin(x(0)) * std::exp(0.3 * x(1)) + x(0) * x(0) * x(1);
    };
    Eigen::VectorXd x(2);
    x << 0.7, -1.1;
    Eigen::VectorXd g = numeric_gradient(f, x);
    const double gx = std::cos(0.7) * std::exp(0.3 * -1.1) + 2.0 * 0.7 * -1.1;
    const double gy = 0.3 * std::sin(0.7) * std::exp(0.3 * -1.1) + 0.7 * 0.7;
    CHECK(g(0) == doctest::Approx(gx).epsilon(1e-7));
    CHECK(g(1) == doctest::Approx(gy).epsilon(1e-7));
}

TEST_CASE("numeric hessian is exact for quadratics and symmetric") {
    Eigen::MatrixXd A(3, 3);
    A << 5, 1, -1, 1, 4, 0.5, -1, 0.5, 3;
    Objective f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(A * x); };
    Eigen::VectorXd x(3);
    x << 0.3, -2.0, 1.7;
    Eigen::MatrixXd H = numeric_hessian(f, x);
    CHECK((H - A).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-8);
}

} // TEST_SUITE
