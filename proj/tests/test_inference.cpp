#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "eefit/errors.hpp"
#include "eefit/inference.hpp"
#include "eefit/nbinom.hpp"
#include "eefit/rng.hpp"
#include "helpers.hpp"
#include "ref.hpp"

using namespace eefit;

namespace {

ModelSpec univariate_spec(SiFamily family, int p, double kappa = 0.5) {
    ModelSpec spec;
    spec.serial_interval.family = family;
    spec.serial_interval.p = p;
    spec.serial_interval.kappa = kappa;
    if (family == SiFamily::unrestricted) spec.serial_interval.logits = Eigen::VectorXd::Zero(p - 1);
    return spec;
}

CoefficientSet zero_coeffs(const ModelSpec& spec, const Dataset& data) {
    CoefficientSet cs;
    cs.layout = build_layout(spec, data);
    cs.values = Eigen::VectorXd::Zero(cs.layout.size());
    return cs;
}

Dataset simulated_dataset(double nu, double phi, const Eigen::VectorXd& u, double psi, int T,
                          std::uint64_t seed) {
    return testutil::make_dataset(testutil::simulate_counts(nu, phi, u, psi, T, seed));
}

Eigen::VectorXd geometric_weights(double kappa, int p) {
    Eigen::VectorXd u(p);
    for (int d = 1; d <= p; ++d) u(d - 1) = std::pow(1.0 - kappa, d - 1) * kappa;
    return u / u.sum();
}

} // namespace

TEST_SUITE("inference") {

TEST_CASE("log likelihood worked examples") {
    SUBCASE("four Poisson zero terms at lambda = 1") {
        Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(5, 1);
        Dataset data = testutil::make_dataset(counts);
        ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
        CoefficientSet cs = zero_coeffs(spec, data);
        cs.set("disp.log_psi", std::log(1e-8)); // Poisson limit
        CHECK(log_likelihood(spec, cs, data) == doctest::Approx(-4.0).epsilon(1e-6));
    }
    SUBCASE("a single term reduces to the count log pmf") {
        Eigen::MatrixXi counts(2, 1);
        counts << 3, 5;
        Dataset data = testutil::make_dataset(counts);
        ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
        CoefficientSet cs = zero_coeffs(spec, data);
        cs.set("end.intercept", std::log(2.0));
        cs.set("epi.intercept", std::log(0.5));
        cs.set("disp.log_psi", std::log(0.3));
        // lambda_2 = 2 + 0.5 * 3 = 3.5
        CHECK(log_likelihood(spec, cs, data) == doctest::Approx(nb_logpmf(5, 3.5, 0.3)).epsilon(1e-12));
    }
    SUBCASE("too-short panels are rejected") {
        Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(3, 1);
        Dataset data = testutil::make_dataset(counts);
        ModelSpec spec = univariate_spec(SiFamily::geometric, 3, 0.5);
        CoefficientSet cs = zero_coeffs(spec, data);
        CHECK_THROWS_AS(log_likelihood(spec, cs, data), DataError);
    }
}

TEST_CASE("log likelihood matches the naive oracle on 100 random instances") {
    Rng rng(4242);
    for (int rep = 0; rep < 100; ++rep) {
        testutil::RefInstance inst = testutil::random_ref_instance(rng);
        const double lib = log_likelihood(inst.spec, inst.coeffs, inst.data);
        const double ref = eefit_ref::ref_log_likelihood(inst.ref, inst.Y);
        CHECK(lib == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("unit relabeling leaves a label-symmetric likelihood unchanged") {
    Rng rng(31337);
    Eigen::MatrixXi counts(25, 3);
    for (int t = 0; t < 25; ++t)
        for (int i = 0; i < 3; ++i) counts(t, i) = static_cast<int>(rng.poisson(6.0));

    Dataset data = testutil::make_dataset(counts);
    data.neighbourhood = testutil::ring_neighbourhood(data.counts.unit_names);

    ModelSpec spec = univariate_spec(SiFamily::geometric, 2, 0.45);
    spec.spatial.kind = SpatialKind::power_law;
    CoefficientSet cs = zero_coeffs(spec, data);
    cs.set("end.intercept", std::log(5.0));
    cs.set("epi.intercept", std::log(0.3));
    cs.set("spatial.log_rho", 0.2);
    cs.set("disp.log_psi", std::log(0.2));
    cs.set("si.logit_kappa", -0.2);
    const double base = log_likelihood(spec, cs, data);

    // cyclic relabeling: unit i -> i+1; permute counts and the neighbourhood
    const std::vector<int> perm = {1, 2, 0};
    Dataset permd = data;
    for (int i = 0; i < 3; ++i) {
        permd.counts.counts.col(perm[i]) = data.counts.counts.col(i);
        permd.counts.unit_names[perm[i]] = data.counts.unit_names[i];
    }
    NeighbourhoodMatrix nb2 = *data.neighbourhood;
    nb2.unit_names = permd.counts.unit_names;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) nb2.order(perm[j], perm[i]) = data.neighbourhood->order(j, i);
    permd.neighbourhood = nb2;

    CHECK(log_likelihood(spec, cs, permd) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches finite differences") {
    Rng rng(90210);
    for (int rep = 0; rep < 12; ++rep) {
        testutil::RefInstance inst = testutil::random_ref_instance(rng);
        const ParamLayout layout = inst.coeffs.layout;
        const Design dz = build_design(inst.spec, inst.data);

        Eigen::VectorXd grad(layout.size());
        log_likelihood_grad(inst.spec, layout, dz, inst.coeffs.values, &grad);

        auto f = [&](const Eigen::VectorXd& v) {
            return log_likelihood_grad(inst.spec, layout, dz, v, nullptr);
        };
        Eigen::VectorXd fd = numeric_gradient(f, inst.coeffs.values);
        for (int k = 0; k < layout.n_inner(); ++k) {
            const double scale = std::max({1.0, std::abs(grad(k)), std::abs(fd(k))});
            CHECK(std::abs(grad(k) - fd(k)) / scale < 1e-5);
        }
    }
}

TEST_CASE("endemic-only recovery and dispersion flooring") {
    // counts simulated at nu = 5, psi = 0.1 with no epidemic feedback
    Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
    Dataset data = simulated_dataset(5.0, 0.0, u1, 0.1, 2000, 2718);

    SUBCASE("intercept lands within three standard errors of log 5") {
        ModelSpec spec;
        spec.serial_interval.family = SiFamily::fixed;
        spec.serial_interval.p = 1;
        FittedModel fm = fit_profile(spec, data);
        CHECK(fm.convergence.converged);
        const int idx = fm.coeffs.layout.index_of("end.intercept");
        const double est = fm.coeffs.values(idx);
        const double se = fm.se(idx);
        REQUIRE(std::isfinite(se));
        CHECK(std::abs(est - std::log(5.0)) < 3.0 * se);
        // epidemic intercept drifts to its floor: note + excluded from se
        const int epi = fm.coeffs.layout.index_of("epi.intercept");
        CHECK(fm.coeffs.values(epi) == doctest::Approx(-20.0));
        bool noted = false;
        for (const auto& n : fm.convergence.notes)
            if (n.find("epidemic component vanishes") != std::string::npos) noted = true;
        CHECK(noted);
        CHECK(std::isnan(fm.se(epi)));
        CHECK(fm.aic == doctest::Approx(-2.0 * fm.loglik + 2.0 * fm.coeffs.layout.size()));
    }
    SUBCASE("Poisson data pushes the dispersion to its floor") {
        Dataset pdata = simulated_dataset(5.0, 0.0, u1, 0.0, 1500, 3141);
        ModelSpec spec;
        spec.serial_interval.family = SiFamily::fixed;
        spec.serial_interval.p = 1;
        FittedModel fm = fit_profile(spec, pdata);
        const int psi_idx = fm.coeffs.layout.index_of("disp.log_psi");
        CHECK(fm.coeffs.values(psi_idx) == doctest::Approx(std::log(1e-8)));
        bool noted = false;
        for (const auto& n : fm.convergence.notes)
            if (n.find("Poisson limit") != std::string::npos) noted = true;
        CHECK(noted);

        // large-sample check: se(alpha) ~ 1/sqrt(sum of lambda) for Poisson
        const int idx = fm.coeffs.layout.index_of("end.intercept");
        const double lam_hat = std::exp(fm.coeffs.values(idx));
        const double analytic = 1.0 / std::sqrt(lam_hat * (pdata.counts.T() - 1));
        REQUIRE(std::isfinite(fm.se(idx)));
        CHECK(fm.se(idx) == doctest::Approx(analytic).epsilon(0.2));
    }
}

TEST_CASE("refitting from the optimum is idempotent") {
    Eigen::VectorXd u = geometric_weights(0.5, 3);
    Dataset data = simulated_dataset(2.0, 0.5, u, 0.1, 500, 5150);
    ModelSpec spec = univariate_spec(SiFamily::geometric, 3, 0.5);
    ParamLayout layout = build_layout(spec, data);
    Design dz = build_design(spec, data);

    Eigen::VectorXd si(1);
    si << 0.0;
    InnerFit first = fit_inner(spec, layout, dz, si);
    InnerFit again = fit_inner(spec, layout, dz, si, &first.coeffs.values);
    CHECK(std::abs(again.loglik - first.loglik) < 1e-8);
}

TEST_CASE("fixed-family profile fit is exactly the inner fit") {
    Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
    Dataset data = simulated_dataset(3.0, 0.4, u1, 0.2, 400, 62);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);

    FittedModel fm = fit_profile(spec, data, FitOptions{.hessian = false});
    InnerFit in = fit_inner(spec, data, Eigen::VectorXd());
    CHECK(fm.loglik == doctest::Approx(in.loglik).epsilon(1e-12));
    CHECK(fm.profile.empty());
    CHECK(std::isnan(fm.kappa_hat));
}

TEST_CASE("profile fit recovers a geometric weighting parameter") {
    const double kappa_true = 0.4;
    Eigen::VectorXd u = geometric_weights(kappa_true, 5);
    Dataset data = simulated_dataset(2.0, 0.6, u, 0.05, 1500, 777);

    ModelSpec spec = univariate_spec(SiFamily::geometric, 5, 0.5);
    FittedModel fm = fit_profile(spec, data);
    CHECK(fm.convergence.converged);
    REQUIRE(std::isfinite(fm.kappa_hat));

    const int ki = fm.coeffs.layout.index_of("si.logit_kappa");
    REQUIRE(std::isfinite(fm.se(ki)));
    const double lo = expit(fm.coeffs.values(ki) - 3.0 * fm.se(ki));
    const double hi = expit(fm.coeffs.values(ki) + 3.0 * fm.se(ki));
    CHECK(lo < kappa_true);
    CHECK(hi > kappa_true);

    // profile trace: attains its max at the fitted kappa and stays below the optimum
    REQUIRE(!fm.profile.empty());
    double best = -1e300;
    for (const auto& pt : fm.profile) best = std::max(best, pt.loglik);
    CHECK(fm.loglik >= best - 1e-6);
    CHECK(fm.si_weights.size() == 5);
    CHECK(std::abs(fm.si_weights.sum() - 1.0) < 1e-12);

    // independent grid of inner fits never beats the profile optimum
    ParamLayout layout = build_layout(spec, data);
    Design dz = build_design(spec, data);
    for (int g = 0; g < 12; ++g) {
        Eigen::VectorXd si(1);
        si << -2.5 + 5.0 * g / 11.0;
        InnerFit in = fit_inner(spec, layout, dz, si);
        CHECK(in.loglik <= fm.loglik + 1e-6);
    }
}

TEST_CASE("unrestricted profile fit approximates the generating weights") {
    Eigen::VectorXd u_true(3);
    u_true << 0.55, 0.30, 0.15;
    Dataset data = simulated_dataset(2.0, 0.7, u_true, 0.05, 1500, 888);

    ModelSpec spec = univariate_spec(SiFamily::unrestricted, 3);
    FittedModel fm = fit_profile(spec, data, FitOptions{.hessian = false, .nm_starts = 3});
    CHECK(fm.convergence.converged);
    REQUIRE(fm.si_weights.size() == 3);
    CHECK(std::abs(fm.si_weights.sum() - 1.0) < 1e-12);
    for (int d = 0; d < 3; ++d) CHECK(std::abs(fm.si_weights(d) - u_true(d)) < 0.12);
    CHECK(std::isnan(fm.kappa_hat)); // no scalar weighting parameter
}

TEST_CASE("order selection follows the family-specific rules") {
    SUBCASE("fixed family always picks order 1") {
        Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
        Dataset data = simulated_dataset(3.0, 0.3, u1, 0.1, 300, 9);
        ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
        OrderSelection sel = select_order(spec, data, 6, FitOptions{.hessian = false});
        CHECK(sel.p == 1);
        CHECK(sel.aic_trace.size() == 1);
    }
    SUBCASE("geometric trace flattens once the residual tail weight is negligible") {
        Eigen::VectorXd u = geometric_weights(0.6, 10);
        Dataset data = simulated_dataset(2.0, 0.6, u, 0.05, 900, 1010);
        ModelSpec spec = univariate_spec(SiFamily::geometric, 3, 0.5);
        OrderSelection sel = select_order(spec, data, 10, FitOptions{.hessian = false});
        CHECK(sel.flattened);
        CHECK(sel.p >= 2);
        CHECK(sel.p <= 8); // (1-0.6)^p < 0.002 by p = 7
        // trace covers p = 1..chosen+1 at least
        CHECK(sel.aic_trace.size() >= static_cast<std::size_t>(sel.p + 1));
    }
    SUBCASE("unrestricted on memoryless data picks a small order") {
        Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
        Dataset data = simulated_dataset(4.0, 0.0, u1, 0.0, 250, 11);
        ModelSpec spec = univariate_spec(SiFamily::unrestricted, 1);
        OrderSelection sel = select_order(spec, data, 4, FitOptions{.hessian = false, .nm_starts = 2});
        CHECK(sel.p <= 2);
    }
    SUBCASE("order guard rejects p_max beyond T/4") {
        Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
        Dataset data = simulated_dataset(3.0, 0.3, u1, 0.1, 40, 12);
        ModelSpec spec = univariate_spec(SiFamily::geometric, 2, 0.5);
        CHECK_THROWS_AS(select_order(spec, data, 11, FitOptions{.hessian = false}), ConfigError);
    }
}

TEST_CASE("AIC prefers the generating geometric family over fixed weights") {
    Eigen::VectorXd u = geometric_weights(0.3, 5);
    Dataset data = simulated_dataset(2.5, 0.6, u, 0.03, 600, 2020);

    FittedModel geo = fit_profile(univariate_spec(SiFamily::geometric, 5, 0.5), data,
                                  FitOptions{.hessian = false});
    FittedModel fix = fit_profile(univariate_spec(SiFamily::fixed, 5), data, FitOptions{.hessian = false});
    CHECK(geo.aic < fix.aic);
}

TEST_CASE("covariance matrix is symmetric with nonnegative diagonal") {
    Eigen::VectorXd u = geometric_weights(0.5, 2);
    Dataset data = simulated_dataset(2.0, 0.5, u, 0.1, 600, 404);
    ModelSpec spec = univariate_spec(SiFamily::geometric, 2, 0.5);
    FittedModel fm = fit_profile(spec, data);
    REQUIRE(fm.cov.rows() == fm.coeffs.layout.size());
    CHECK((fm.cov - fm.cov.transpose()).cwiseAbs().maxCoeff() < 1e-8);
    for (int k = 0; k < fm.cov.rows(); ++k)
        if (std::isfinite(fm.cov(k, k))) CHECK(fm.cov(k, k) >= 0.0);
}

} // TEST_SUITE
