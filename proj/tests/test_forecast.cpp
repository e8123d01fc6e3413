#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "eefit/errors.hpp"
#include "eefit/eval.hpp"
#include "eefit/forecast.hpp"
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

using testutil::make_fitted;

} // namespace

TEST_SUITE("forecast") {

TEST_CASE("path simulation is deterministic and endemic means are unbiased") {
    // nu = 3, epidemic floor, psi floor: effectively iid Poisson(3) paths
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(16, 2);
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
    FittedModel fm = make_fitted(spec, data,
                                 {{"end.intercept", std::log(3.0)},
                                  {"epi.intercept", -20.0},
                                  {"disp.log_psi", std::log(1e-8)}});

    SUBCASE("same seed gives identical paths") {
        auto a = simulate_paths(fm, data, 10, 3, 2, 99);
        auto b = simulate_paths(fm, data, 10, 3, 2, 99);
        REQUIRE(a.size() == 2);
        for (int k = 0; k < 2; ++k) CHECK(a[k] == b[k]);
        auto c = simulate_paths(fm, data, 10, 3, 2, 100);
        bool differs = false;
        for (int k = 0; k < 2; ++k) differs = differs || (a[k] != c[k]);
        CHECK(differs);
    }
    SUBCASE("per-step sample means match the endemic rate") {
        const int N = 4000, H = 3;
        auto paths = simulate_paths(fm, data, 10, H, N, 7);
        double total = 0.0;
        long cells = 0;
        for (const auto& path : paths) {
            REQUIRE(path.rows() == H);
            REQUIRE(path.cols() == 2);
            total += path.cast<double>().sum();
            cells += path.size();
        }
        const double mean = total / static_cast<double>(cells);
        const double se = std::sqrt(3.0 / static_cast<double>(cells));
        CHECK(std::abs(mean - 3.0) < 3.0 * se);
    }
    SUBCASE("origin bounds are enforced") {
        // horizon runs past the panel / origin before the first lag window
        CHECK_THROWS_AS(simulate_paths(fm, data, 16, 1, 1, 1), DataError);
        CHECK_THROWS_AS(simulate_paths(fm, data, 0, 1, 1, 1), DataError);
    }
}

TEST_CASE("epidemic feedback induces positive path autocorrelation") {
    Eigen::MatrixXi counts = Eigen::MatrixXi::Constant(22, 1, 8);
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
    FittedModel fm = make_fitted(spec, data,
                                 {{"end.intercept", std::log(0.5)},
                                  {"epi.intercept", std::log(0.85)},
                                  {"disp.log_psi", std::log(0.3)}});

    const int N = 600, H = 12;
    auto paths = simulate_paths(fm, data, 10, H, N, 21);
    // pooled lag-1 autocovariance of path increments around the pooled mean
    double sxy = 0.0, sxx = 0.0, mean = 0.0;
    for (const auto& path : paths) mean += path.cast<double>().sum();
    mean /= static_cast<double>(N * H);
    for (const auto& path : paths)
        for (int t = 1; t < H; ++t) {
            const double a = path(t - 1, 0) - mean, b = path(t, 0) - mean;
            sxy += a * b;
            sxx += a * a;
        }
    CHECK(sxy / sxx > 0.15);
}

TEST_CASE("one-step score worked examples") {
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(8, 1);
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
    FittedModel fm = make_fitted(spec, data,
                                 {{"end.intercept", std::log(2.0)},
                                  {"epi.intercept", -20.0},
                                  {"disp.log_psi", std::log(1e-8)}});

    SUBCASE("lambda=2, y=0 scores 2.0") {
        Eigen::VectorXi y(1);
        y << 0;
        ScoreResult s = logscore_onestep(fm, data, 7, y);
        CHECK(s.score == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(s.mc_se == 0.0);
    }
    SUBCASE("standardized two-unit score equals the univariate score") {
        Eigen::MatrixXi c2 = Eigen::MatrixXi::Zero(8, 2);
        Dataset d2 = testutil::make_dataset(c2);
        FittedModel fm2 = make_fitted(spec, d2,
                                      {{"end.intercept", std::log(2.0)},
                                       {"epi.intercept", -20.0},
                                       {"disp.log_psi", std::log(1e-8)}});
        Eigen::VectorXi y1(1), y2(2);
        y1 << 3;
        y2 << 3, 3;
        const double uni = logscore_onestep(fm, data, 7, y1).score;
        const double multi = logscore_onestep(fm2, d2, 7, y2, true).score;
        CHECK(multi == doctest::Approx(uni).epsilon(1e-12));
    }
    SUBCASE("h=1 RB score degenerates to the analytic value with zero se") {
        Eigen::VectorXi y(1);
        y << 2;
        ForecastConfig cfg;
        cfg.n_paths = 50;
        cfg.seed = 5;
        ScoreResult rb = logscore_rb(fm, data, 7, 1, y, cfg);
        ScoreResult an = logscore_onestep(fm, data, 7, y);
        CHECK(rb.score == doctest::Approx(an.score).epsilon(1e-12));
        CHECK(rb.mc_se == 0.0);
    }
}

TEST_CASE("RB score with no feedback is exact with zero Monte Carlo error") {
    // epidemic coefficient pushed far enough down that phi * X falls below
    // half an ulp of nu: lambda_{t+h} rounds to nu bit-exactly on every path,
    // so the per-path densities coincide and the s.e. is exactly zero
    Eigen::MatrixXi counts = Eigen::MatrixXi::Constant(9, 1, 2);
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
    const double nu = 2.4, psi = 0.15;
    FittedModel fm = make_fitted(spec, data,
                                 {{"end.intercept", std::log(nu)},
                                  {"epi.intercept", -60.0},
                                  {"disp.log_psi", std::log(psi)}});

    Eigen::VectorXi y(1);
    y << 4;
    ForecastConfig cfg;
    cfg.n_paths = 400;
    cfg.seed = 31;
    ScoreResult rb = logscore_rb(fm, data, 6, 3, y, cfg);
    CHECK(rb.mc_se == 0.0);
    CHECK(rb.underflow == false);
    CHECK(rb.score == doctest::Approx(-nb_logpmf(4, nu, psi)).epsilon(1e-6));
}

TEST_CASE("RB two-step estimate matches exhaustive marginalization") {
    // univariate geometric p=2, small counts: marginalize the middle week exactly
    Eigen::MatrixXi counts(6, 1);
    counts << 1, 2, 0, 3, 1, 2;
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::geometric, 2, 0.6);
    const double nu = 1.5, phi = 0.5, psi = 0.1, kappa = 0.6;
    FittedModel fm = make_fitted(spec, data,
                                 {{"end.intercept", std::log(nu)},
                                  {"epi.intercept", std::log(phi)},
                                  {"disp.log_psi", std::log(psi)},
                                  {"si.logit_kappa", logit(kappa)}});

    const int origin = 4; // history rows 1..4, scoring week 6
    const long y_obs = counts(5, 0);

    // exact density: weights (kappa, (1-kappa)kappa)/norm over lags 1..2
    Eigen::VectorXd u = fm.si_weights;
    std::vector<double> uref(u.data(), u.data() + u.size());
    const std::vector<long> hist = {counts(3, 0), counts(2, 0)}; // most recent first
    const double exact = eefit_ref::ref_exhaustive_twostep(nu, phi, nu, phi, uref, hist, psi, y_obs, 400);

    ForecastConfig cfg;
    cfg.n_paths = 4000;
    cfg.seed = 99;
    ScoreResult rb = logscore_rb(fm, data, origin, 2, Eigen::VectorXi::Constant(1, static_cast<int>(y_obs)), cfg);
    REQUIRE(rb.mc_se > 0.0);
    CHECK(std::abs(rb.score - (-std::log(exact))) < 3.0 * rb.mc_se);
}

TEST_CASE("the true predictive model scores better than an inflated one") {
    // strict propriety spot check: E[-log q] minimized at q = p
    const double nu = 3.0, psi = 0.2;
    Rng rng(1212);
    const int n = 10000;
    double s_true = 0.0, s_pert = 0.0, ss_d = 0.0;
    for (int k = 0; k < n; ++k) {
        const long y = rng.neg_binomial(nu, psi);
        const double a = -nb_logpmf(y, nu, psi);
        const double b = -nb_logpmf(y, 1.5 * nu, psi);
        s_true += a;
        s_pert += b;
        ss_d += (a - b) * (a - b);
    }
    const double mean_d = (s_true - s_pert) / n;
    const double se_d = std::sqrt((ss_d / n - mean_d * mean_d) / n);
    CHECK(mean_d < -3.0 * se_d);
}

TEST_CASE("rolling forecasts follow the origin-counting convention") {
    Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
    Eigen::MatrixXi counts = testutil::simulate_counts(3.0, 0.4, u1, 0.1, 60, 321);
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);

    SUBCASE("H=1 over five origins yields five analytic rows") {
        ForecastConfig cfg;
        cfg.horizons = 1;
        cfg.n_paths = 200;
        cfg.seed = 8;
        ForecastSet fs = rolling_forecasts(spec, data, 56, cfg);
        REQUIRE(fs.rows.size() == 5);
        for (const auto& row : fs.rows) {
            CHECK(row.horizon == 1);
            CHECK(row.mc_se == 0.0);
            CHECK(row.n_paths == 0); // analytic, no simulation
            CHECK(row.lambda1.size() == 1);
            CHECK(row.psi1.size() == 1);
            CHECK(std::isfinite(row.score));
        }
        CHECK(fs.failed_origins.empty());
    }
    SUBCASE("horizon h has n_test - h + 1 rows") {
        ForecastConfig cfg;
        cfg.horizons = 4;
        cfg.n_paths = 60;
        cfg.seed = 8;
        const int test_start = 51; // n_test = 10
        ForecastSet fs = rolling_forecasts(spec, data, test_start, cfg);
        std::vector<int> per_h(5, 0);
        for (const auto& row : fs.rows) ++per_h[row.horizon];
        CHECK(per_h[1] == 10);
        CHECK(per_h[2] == 9);
        CHECK(per_h[3] == 8);
        CHECK(per_h[4] == 7);
    }
    SUBCASE("frozen coefficients reproduce scores bit-exactly") {
        ForecastConfig cfg;
        cfg.horizons = 3;
        cfg.n_paths = 80;
        cfg.seed = 77;
        cfg.refit = false;
        ForecastSet a = rolling_forecasts(spec, data, 53, cfg);
        ForecastSet b = rolling_forecasts(spec, data, 53, cfg);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t k = 0; k < a.rows.size(); ++k) {
            CHECK(a.rows[k].score == b.rows[k].score);
            CHECK(a.rows[k].mc_se == b.rows[k].mc_se);
        }
    }
    SUBCASE("test window must leave a training stretch") {
        ForecastConfig cfg;
        CHECK_THROWS_AS(rolling_forecasts(spec, data, 2, cfg), ConfigError);
        CHECK_THROWS_AS(rolling_forecasts(spec, data, 61, cfg), ConfigError);
    }
    SUBCASE("sample sink receives one block per origin") {
        ForecastConfig cfg;
        cfg.horizons = 2;
        cfg.n_paths = 30;
        cfg.seed = 5;
        int calls = 0;
        auto sink = [&](int origin, const std::string& week, const std::vector<Eigen::MatrixXi>& paths) {
            ++calls;
            CHECK(origin >= 55);
            CHECK(!week.empty());
            CHECK(paths.size() == 30);
            CHECK(paths[0].cols() == 1);
        };
        rolling_forecasts(spec, data, 56, cfg, sink);
        CHECK(calls == 5);
    }
}

TEST_CASE("scores survive a CSV round trip") {
    Eigen::VectorXd u1 = Eigen::VectorXd::Ones(1);
    Eigen::MatrixXi counts = testutil::simulate_counts(3.0, 0.4, u1, 0.1, 50, 33);
    Dataset data = testutil::make_dataset(counts);
    ModelSpec spec = univariate_spec(SiFamily::fixed, 1);
    ForecastConfig cfg;
    cfg.horizons = 2;
    cfg.n_paths = 40;
    cfg.seed = 3;
    ForecastSet fs = rolling_forecasts(spec, data, 46, cfg);

    testutil::TempDir dir("scores");
    const std::string path = dir.file("scores.csv");
    write_scores_csv(fs, path);

    const std::string text = testutil::read_file(path);
    CHECK(text.rfind("origin_week,horizon,score,mc_se,n_paths,seed\n", 0) == 0);

    ScoreFile sf = read_scores_csv(path, "model_a");
    REQUIRE(sf.rows.size() == fs.rows.size());
    for (std::size_t k = 0; k < fs.rows.size(); ++k) {
        CHECK(sf.rows[k].origin_week == fs.rows[k].origin_week);
        CHECK(sf.rows[k].horizon == fs.rows[k].horizon);
        CHECK(sf.rows[k].score == doctest::Approx(fs.rows[k].score).epsilon(1e-9));
    }
}

} // TEST_SUITE
