// Timing comparison: OpenMP library kernels vs the serial naive reference.
// Not a test; run the binary directly.

#include <chrono>
#include <cstdio>
#include <vector>

#include "eefit/forecast.hpp"
#include "eefit/inference.hpp"
#include "eefit/rng.hpp"

#include "../reference/ref.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace eefit;

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

Dataset ring_panel(int T, int m, unsigned seed) {
    Dataset data;
    CountsPanel& panel = data.counts;
    panel.counts.resize(T, m);
    Rng rng(seed);
    for (int i = 0; i < m; ++i) panel.unit_names.push_back("unit" + std::to_string(i + 1));
    int year = 2000, week = 1;
    for (int t = 0; t < T; ++t) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-W%02d", year, week);
        panel.week_labels.push_back(buf);
        panel.calendar_week.push_back(week);
        if (++week > 52) {
            week = 1;
            ++year;
        }
        for (int i = 0; i < m; ++i) panel.counts(t, i) = static_cast<int>(rng.poisson(8.0 + 3.0 * (i % 3)));
    }
    NeighbourhoodMatrix nb;
    nb.unit_names = panel.unit_names;
    nb.order.resize(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            const int d = std::abs(a - b);
            nb.order(a, b) = std::min(d, m - d);
        }
    data.neighbourhood = nb;
    data.covariates = build_covariates(panel);
    return data;
}

} // namespace

int main() {
    const int T = 520, m = 12;
    const Dataset data = ring_panel(T, m, 99);

    ModelSpec spec;
    spec.endemic.harmonics = 1;
    spec.epidemic.intercept = InterceptKind::shared;
    spec.serial_interval.family = SiFamily::geometric;
    spec.serial_interval.p = 5;
    spec.serial_interval.kappa = 0.4;
    spec.spatial.kind = SpatialKind::power_law;
    spec.spatial.rho = 1.5;

    const ParamLayout layout = build_layout(spec, data);
    const Design design = build_design(spec, data);
    Eigen::VectorXd values = Eigen::VectorXd::Zero(layout.size());
    values(layout.end_intercept_base) = 1.5;
    values(layout.end_harm_base) = 0.3;
    values(layout.end_harm_base + 1) = 0.2;
    values(layout.epi_intercept_base) = -0.7;
    values(layout.log_rho_index) = 0.4;
    values(layout.log_psi_base) = std::log(0.08);
    values(layout.si_base) = kappa_to_real(SiFamily::geometric, 0.4);

#ifdef _OPENMP
    std::printf("OpenMP: %d thread(s)\n", omp_get_max_threads());
#else
    std::printf("OpenMP: disabled\n");
#endif

    // --- likelihood + gradient, library (parallel) vs reference (serial)
    const int reps = 50;
    Eigen::VectorXd grad(layout.size());
    double ll_lib = 0.0;
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) ll_lib = log_likelihood_grad(spec, layout, design, values, &grad);
    const double lib_ms = ms_since(t0) / reps;

    eefit_ref::RefModel ref;
    ref.end_intercept.assign(m, values(layout.end_intercept_base));
    ref.end_sin = {values(layout.end_harm_base)};
    ref.end_cos = {values(layout.end_harm_base + 1)};
    ref.epi_intercept.assign(m, values(layout.epi_intercept_base));
    ref.psi.assign(m, std::exp(values(layout.log_psi_base)));
    {
        std::vector<double> u = eefit_ref::ref_lag_weights_geometric(5, 0.4);
        ref.u = u;
        std::vector<std::vector<int>> order(m, std::vector<int>(m));
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) order[a][b] = data.neighbourhood->order(a, b);
        ref.W = eefit_ref::ref_power_law_weights(order, std::exp(values(layout.log_rho_index)));
    }
    std::vector<std::vector<long>> Y(T, std::vector<long>(m));
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < m; ++i) Y[t][i] = data.counts.counts(t, i);
    double ll_ref = 0.0;
    t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) ll_ref = eefit_ref::ref_log_likelihood(ref, Y);
    const double ref_ms = ms_since(t0) / reps;
    std::printf("likelihood+grad  library %8.3f ms   naive serial %8.3f ms   (ll %.6f vs %.6f)\n", lib_ms,
                ref_ms, ll_lib, ll_ref);

    // --- path simulation and RB scoring (parallel over paths)
    FittedModel fm;
    fm.spec = spec;
    fm.coeffs.layout = layout;
    fm.coeffs.values = values;
    fm.convergence.converged = true;
    fm.si_weights = lag_weights_at(spec, layout, values);

    const int origin = T - 8;
    t0 = std::chrono::steady_clock::now();
    const auto paths = simulate_paths(fm, data, origin, 4, 1000, 7);
    std::printf("simulate_paths   N=1000 H=4: %8.3f ms\n", ms_since(t0));

    ForecastConfig fc;
    fc.n_paths = 1000;
    fc.seed = 7;
    const Eigen::VectorXi y_obs = data.counts.counts.row(origin + 3).transpose();
    t0 = std::chrono::steady_clock::now();
    const ScoreResult rb = logscore_rb(fm, data, origin, 4, y_obs, fc);
    std::printf("logscore_rb      N=1000 h=4: %8.3f ms   (score %.4f, se %.5f)\n", ms_since(t0), rb.score,
                rb.mc_se);
    (void)paths;
    return 0;
}
