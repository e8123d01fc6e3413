#pragma once

// Shared fixtures for the test suite: synthetic panels, simulated count
// series and temp-file plumbing. Kept header-only for simplicity.

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "eefit/data.hpp"
#include "eefit/inference.hpp"
#include "eefit/model.hpp"
#include "eefit/rng.hpp"
#include "eefit/weights.hpp"
#include "ref.hpp"

namespace testutil {

// ISO labels on a plain 52-week calendar starting at 2000-W01.
inline std::vector<std::string> week_labels(int T, int start_week = 1, int start_year = 2000) {
    std::vector<std::string> out;
    out.reserve(T);
    int w = start_week, y = start_year;
    char buf[16];
    for (int t = 0; t < T; ++t) {
        std::snprintf(buf, sizeof(buf), "%04d-W%02d", y, w);
        out.emplace_back(buf);
        if (++w > 52) {
            w = 1;
            ++y;
        }
    }
    return out;
}

inline eefit::CountsPanel make_panel(const Eigen::MatrixXi& counts, int start_week = 1) {
    eefit::CountsPanel p;
    p.counts = counts;
    p.week_labels = week_labels(static_cast<int>(counts.rows()), start_week);
    p.calendar_week.resize(counts.rows());
    for (int t = 0; t < counts.rows(); ++t)
        p.calendar_week[t] = eefit::parse_iso_week(p.week_labels[t]).week;
    p.unit_names.resize(counts.cols());
    for (int i = 0; i < counts.cols(); ++i) p.unit_names[i] = "u" + std::to_string(i + 1);
    p.validate();
    return p;
}

inline eefit::Dataset make_dataset(const Eigen::MatrixXi& counts, int start_week = 1) {
    eefit::Dataset d;
    d.counts = make_panel(counts, start_week);
    d.covariates = eefit::build_covariates(d.counts);
    return d;
}

// Ring-graph neighbourhood over m units (path distance along the ring).
inline eefit::NeighbourhoodMatrix ring_neighbourhood(const std::vector<std::string>& unit_names) {
    const int m = static_cast<int>(unit_names.size());
    eefit::NeighbourhoodMatrix nb;
    nb.unit_names = unit_names;
    nb.order.resize(m, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            int d = std::abs(i - j);
            nb.order(j, i) = std::min(d, m - d);
        }
    nb.validate();
    return nb;
}

inline eefit::PopulationShares equal_shares(const std::vector<std::string>& unit_names) {
    eefit::PopulationShares ps;
    ps.unit_names = unit_names;
    ps.share = Eigen::VectorXd::Constant(static_cast<long>(unit_names.size()),
                                         1.0 / static_cast<double>(unit_names.size()));
    ps.validate();
    return ps;
}

// Univariate count series from the autoregressive mean
//   lambda_t = nu + phi * sum_d u_d y_{t-d},  Y_t ~ NegBin(lambda_t, psi),
// seeded with `burn` discarded weeks started from the endemic mean.
inline Eigen::MatrixXi simulate_counts(double nu, double phi, const Eigen::VectorXd& u, double psi, int T,
                                       std::uint64_t seed, int burn = 100) {
    const int p = static_cast<int>(u.size());
    eefit::Rng rng(seed);
    std::vector<long> y;
    y.reserve(T + burn + p);
    for (int t = 0; t < p; ++t) y.push_back(rng.neg_binomial(nu, psi));
    for (int t = 0; t < T + burn; ++t) {
        double lam = nu;
        const int n = static_cast<int>(y.size());
        for (int d = 1; d <= p; ++d) lam += phi * u(d - 1) * static_cast<double>(y[n - d]);
        y.push_back(rng.neg_binomial(lam, psi));
    }
    Eigen::MatrixXi out(T, 1);
    const int n = static_cast<int>(y.size());
    for (int t = 0; t < T; ++t) out(t, 0) = static_cast<int>(y[n - T + t]);
    return out;
}

// Hand-built fitted model: the named coefficients are taken literally with
// no optimization involved, so predictive quantities are known in closed form.
inline eefit::FittedModel make_fitted(const eefit::ModelSpec& spec, const eefit::Dataset& data,
                                      const std::vector<std::pair<std::string, double>>& coeffs) {
    eefit::FittedModel fm;
    fm.spec = spec;
    fm.coeffs.layout = eefit::build_layout(spec, data);
    fm.coeffs.values = Eigen::VectorXd::Zero(fm.coeffs.layout.size());
    for (const auto& [name, v] : coeffs) fm.coeffs.set(name, v);
    fm.convergence.converged = true;
    fm.si_weights = eefit::lag_weights_at(spec, fm.coeffs.layout, fm.coeffs.values);
    return fm;
}

// Random multi-unit model instance mirrored into the naive reference
// implementation, including dispersion, so mean and likelihood oracles can
// both run against it.
struct RefInstance {
    eefit::ModelSpec spec;
    eefit::Dataset data;
    eefit::CoefficientSet coeffs;
    eefit_ref::RefModel ref;
    std::vector<std::vector<long>> Y;
};

inline RefInstance random_ref_instance(eefit::Rng& rng, bool force_univariate = false) {
    using namespace eefit;
    RefInstance inst;
    const int m = force_univariate ? 1 : 1 + static_cast<int>(rng.uniform01() * 4);
    const int T = 12 + static_cast<int>(rng.uniform01() * 19);
    const int p = 1 + static_cast<int>(rng.uniform01() * 4);

    Eigen::MatrixXi counts(T, m);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < m; ++i) counts(t, i) = static_cast<int>(rng.poisson(5.0));
    inst.data = make_dataset(counts);

    ModelSpec spec;
    spec.endemic.intercept = rng.uniform01() < 0.5 ? InterceptKind::shared : InterceptKind::per_unit;
    spec.endemic.harmonics = static_cast<int>(rng.uniform01() * 3);
    if (rng.uniform01() < 0.5) spec.endemic.covariates = {"christmas"};
    spec.epidemic.intercept = rng.uniform01() < 0.5 ? InterceptKind::shared : InterceptKind::per_unit;
    spec.epidemic.harmonics = static_cast<int>(rng.uniform01() * 2);
    spec.serial_interval.p = p;
    const double fam_draw = rng.uniform01();
    if (fam_draw < 0.25) {
        spec.serial_interval.family = SiFamily::fixed;
    } else if (fam_draw < 0.5) {
        spec.serial_interval.family = SiFamily::geometric;
        spec.serial_interval.kappa = 0.2 + 0.6 * rng.uniform01();
    } else if (fam_draw < 0.75) {
        spec.serial_interval.family = SiFamily::shifted_poisson;
        spec.serial_interval.kappa = 0.3 + 2.0 * rng.uniform01();
    } else {
        spec.serial_interval.family = SiFamily::unrestricted;
        spec.serial_interval.logits = Eigen::VectorXd::Zero(p - 1);
        for (int d = 0; d < p - 1; ++d) spec.serial_interval.logits(d) = rng.normal();
    }
    if (m > 1 && rng.uniform01() < 0.6) {
        spec.spatial.kind = SpatialKind::power_law;
        spec.spatial.rho = 0.3 + 2.0 * rng.uniform01();
        inst.data.neighbourhood = ring_neighbourhood(inst.data.counts.unit_names);
    }
    if (spec.epidemic.intercept == InterceptKind::shared && rng.uniform01() < 0.4) {
        spec.gravity = true;
        Eigen::VectorXd share(m);
        for (int i = 0; i < m; ++i) share(i) = 0.2 + rng.uniform01();
        share /= share.sum();
        PopulationShares ps;
        ps.unit_names = inst.data.counts.unit_names;
        ps.share = share;
        inst.data.populations = ps;
    }
    spec.per_unit_dispersion = rng.uniform01() < 0.3;
    inst.spec = spec;

    CoefficientSet cs;
    cs.layout = build_layout(spec, inst.data);
    cs.values = Eigen::VectorXd::Zero(cs.layout.size());
    for (int k = 0; k < cs.layout.size(); ++k) cs.values(k) = 0.4 * rng.normal();
    // keep the epidemic part modest so lambda stays well-behaved
    for (int k = 0; k < cs.layout.epi_intercept_count; ++k)
        cs.values(cs.layout.epi_intercept_base + k) = -1.0 + 0.5 * rng.normal();
    inst.coeffs = cs;

    // mirror into the reference model
    eefit_ref::RefModel& r = inst.ref;
    const auto& lay = cs.layout;
    r.period = spec.period;
    for (int i = 0; i < m; ++i) {
        r.end_intercept.push_back(lay.end_intercept_count == 1 ? cs.values(lay.end_intercept_base)
                                                               : cs.values(lay.end_intercept_base + i));
        r.epi_intercept.push_back(lay.epi_intercept_count == 1 ? cs.values(lay.epi_intercept_base)
                                                               : cs.values(lay.epi_intercept_base + i));
        r.psi.push_back(std::exp(lay.log_psi_count == 1 ? cs.values(lay.log_psi_base)
                                                        : cs.values(lay.log_psi_base + i)));
    }
    for (int c = 0; c < lay.end_cov_count; ++c) {
        Eigen::VectorXd col = inst.data.covariates.column(spec.endemic.covariates[c]);
        r.end_cov_cols.emplace_back(col.data(), col.data() + col.size());
        r.end_cov_coef.push_back(cs.values(lay.end_cov_base + c));
    }
    for (int k = 0; k < lay.end_harm_pairs; ++k) {
        r.end_sin.push_back(cs.values(lay.end_harm_base + 2 * k));
        r.end_cos.push_back(cs.values(lay.end_harm_base + 2 * k + 1));
    }
    for (int k = 0; k < lay.epi_harm_pairs; ++k) {
        r.epi_sin.push_back(cs.values(lay.epi_harm_base + 2 * k));
        r.epi_cos.push_back(cs.values(lay.epi_harm_base + 2 * k + 1));
    }
    if (spec.gravity) {
        r.tau = cs.values(lay.tau_index);
        for (int i = 0; i < m; ++i) r.log_pop.push_back(std::log(inst.data.populations->share(i)));
    }

    // weights at the coefficient values actually stored in the layout
    Eigen::VectorXd u = lag_weights_at(spec, lay, cs.values);
    r.u.assign(u.data(), u.data() + u.size());
    if (spec.spatial.kind == SpatialKind::power_law && m > 1) {
        SpatialWeightSpec sp{SpatialKind::power_law, std::exp(cs.values(lay.log_rho_index))};
        Eigen::MatrixXd W = spatial_weights(sp, *inst.data.neighbourhood);
        r.W.assign(m, std::vector<double>(m));
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i) r.W[j][i] = W(j, i);
    }

    inst.Y.assign(T, std::vector<long>(m));
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < m; ++i) inst.Y[t][i] = counts(t, i);
    return inst;
}

// Unique scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("eefit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace testutil
