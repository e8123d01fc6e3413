#include "eefit/model.hpp"

#include <cmath>
#include <stdexcept>

#include "eefit/errors.hpp"
#include "eefit/mathutil.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eefit {

void ModelSpec::validate() const {
    if (period < 2) throw ConfigError("seasonal period must be at least 2");
    if (endemic.harmonics < 0 || endemic.harmonics > 4 || epidemic.harmonics < 0 || epidemic.harmonics > 4)
        throw ConfigError("harmonic pairs must lie in 0..4");
    if (gravity && epidemic.intercept == InterceptKind::per_unit)
        throw ConfigError("gravity term and per-unit epidemic intercepts are mutually exclusive");
    serial_interval.validate();
    spatial.validate();
}

int ParamLayout::index_of(const std::string& name) const {
    for (int k = 0; k < size(); ++k)
        if (names[k] == name) return k;
    throw std::out_of_range("unknown coefficient name: " + name);
}

namespace {

void push_component(std::vector<std::string>& names, const ComponentSpec& comp, const std::string& prefix,
                    const std::vector<std::string>& unit_names, int& intercept_base, int& intercept_count,
                    int& cov_base, int& cov_count, int& harm_base, int& harm_pairs) {
    intercept_base = static_cast<int>(names.size());
    if (comp.intercept == InterceptKind::shared) {
        names.push_back(prefix + ".intercept");
        intercept_count = 1;
    } else {
        for (const auto& u : unit_names) names.push_back(prefix + ".intercept[" + u + "]");
        intercept_count = static_cast<int>(unit_names.size());
    }
    cov_base = static_cast<int>(names.size());
    for (const auto& c : comp.covariates) names.push_back(prefix + ".beta[" + c + "]");
    cov_count = static_cast<int>(comp.covariates.size());
    harm_base = static_cast<int>(names.size());
    for (int k = 1; k <= comp.harmonics; ++k) {
        names.push_back(prefix + ".sin" + std::to_string(k));
        names.push_back(prefix + ".cos" + std::to_string(k));
    }
    harm_pairs = comp.harmonics;
}

} // namespace

ParamLayout build_layout(const ModelSpec& spec, const Dataset& data) {
    spec.validate();
    const int m = data.counts.m();
    for (const auto& c : spec.endemic.covariates)
        if (!data.covariates.has(c)) throw ConfigError("unknown endemic covariate: " + c);
    for (const auto& c : spec.epidemic.covariates)
        if (!data.covariates.has(c)) throw ConfigError("unknown epidemic covariate: " + c);
    if (spec.gravity && !data.populations) throw ConfigError("gravity term requires population shares");
    if (spec.spatial.kind == SpatialKind::power_law && m > 1 && !data.neighbourhood)
        throw ConfigError("power-law coupling requires a neighbourhood order matrix");

    ParamLayout lay;
    push_component(lay.names, spec.endemic, "end", data.counts.unit_names, lay.end_intercept_base,
                   lay.end_intercept_count, lay.end_cov_base, lay.end_cov_count, lay.end_harm_base,
                   lay.end_harm_pairs);
    push_component(lay.names, spec.epidemic, "epi", data.counts.unit_names, lay.epi_intercept_base,
                   lay.epi_intercept_count, lay.epi_cov_base, lay.epi_cov_count, lay.epi_harm_base,
                   lay.epi_harm_pairs);
    if (spec.gravity) {
        lay.tau_index = static_cast<int>(lay.names.size());
        lay.names.push_back("epi.tau");
    }
    if (spec.spatial.kind == SpatialKind::power_law && m > 1) {
        lay.log_rho_index = static_cast<int>(lay.names.size());
        lay.names.push_back("spatial.log_rho");
    }
    lay.log_psi_base = static_cast<int>(lay.names.size());
    if (spec.per_unit_dispersion) {
        for (const auto& u : data.counts.unit_names) lay.names.push_back("disp.log_psi[" + u + "]");
        lay.log_psi_count = m;
    } else {
        lay.names.push_back("disp.log_psi");
        lay.log_psi_count = 1;
    }
    lay.si_base = static_cast<int>(lay.names.size());
    const auto& si = spec.serial_interval;
    // At p = 1 every family degenerates to all mass on lag 1, so the
    // weighting parameter is unidentifiable and kept out of the layout.
    if (si.p >= 2 && si.family == SiFamily::shifted_poisson) {
        lay.names.push_back("si.log_kappa");
    } else if (si.p >= 2 && (si.family == SiFamily::triangular || si.family == SiFamily::geometric)) {
        lay.names.push_back("si.logit_kappa");
    } else if (si.family == SiFamily::unrestricted) {
        for (int d = 2; d <= si.p; ++d) lay.names.push_back("si.logit_u" + std::to_string(d));
    }
    lay.si_count = static_cast<int>(lay.names.size()) - lay.si_base;
    return lay;
}

Design build_design(const ModelSpec& spec, const Dataset& data) {
    Design dz;
    dz.T = data.counts.T();
    dz.m = data.counts.m();
    dz.Yi = data.counts.counts;
    dz.Y = dz.Yi.cast<double>();
    const double omega = spec.period;
    auto harmonics = [&](int pairs, Eigen::MatrixXd& s, Eigen::MatrixXd& c) {
        s.resize(dz.T, pairs);
        c.resize(dz.T, pairs);
        for (int t = 0; t < dz.T; ++t)
            for (int k = 1; k <= pairs; ++k) {
                const double arg = 2.0 * M_PI * k * (t + 1) / omega;
                s(t, k - 1) = std::sin(arg);
                c(t, k - 1) = std::cos(arg);
            }
    };
    harmonics(spec.endemic.harmonics, dz.sin_nu, dz.cos_nu);
    harmonics(spec.epidemic.harmonics, dz.sin_phi, dz.cos_phi);
    auto cov_block = [&](const std::vector<std::string>& names) {
        Eigen::MatrixXd block(dz.T, static_cast<int>(names.size()));
        for (int c = 0; c < block.cols(); ++c) block.col(c) = data.covariates.column(names[c]);
        return block;
    };
    dz.end_covs = cov_block(spec.endemic.covariates);
    dz.epi_covs = cov_block(spec.epidemic.covariates);
    if (spec.gravity) dz.log_pop_share = data.populations->share.array().log().matrix();
    if (data.neighbourhood) dz.nb = &*data.neighbourhood;
    return dz;
}

Eigen::MatrixXd lag_weighted_counts(const Eigen::MatrixXd& Y, const Eigen::VectorXd& u) {
    const int T = static_cast<int>(Y.rows());
    const int m = static_cast<int>(Y.cols());
    const int p = static_cast<int>(u.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(T, m);
#pragma omp parallel for schedule(static)
    for (int t = p; t < T; ++t)
        for (int d = 1; d <= p; ++d) A.row(t).noalias() += u(d - 1) * Y.row(t - d);
    return A;
}

Eigen::VectorXd lag_weights_at(const ModelSpec& spec, const ParamLayout& layout, const Eigen::VectorXd& values) {
    SerialIntervalSpec si = spec.serial_interval;
    if (layout.si_count > 0) {
        if (si.parametric()) {
            si.kappa = kappa_from_real(si.family, values(layout.si_base));
        } else {
            si.logits.resize(layout.si_count);
            for (int k = 0; k < layout.si_count; ++k) si.logits[k] = values(layout.si_base + k);
        }
    }
    return lag_weights(si);
}

MeanParts evaluate_mean_parts(const ModelSpec& spec, const ParamLayout& layout, const Design& design,
                              const Eigen::VectorXd& values, bool need_rho_grad) {
    if (values.size() != layout.size()) throw std::invalid_argument("coefficient vector length mismatch");
    const int T = design.T, m = design.m;
    const int p = spec.serial_interval.p;

    MeanParts out;
    out.first_valid = p;
    out.nu.resize(T, m);
    out.phi.resize(T, m);

    const Eigen::VectorXd u = lag_weights_at(spec, layout, values);
    const Eigen::MatrixXd A = lag_weighted_counts(design.Y, u);
    if (spec.spatial.kind == SpatialKind::power_law && m > 1) {
        SpatialWeightSpec sp = spec.spatial;
        sp.rho = std::exp(values(layout.log_rho_index));
        if (need_rho_grad) {
            Eigen::MatrixXd W, dW;
            spatial_weights_with_grad(sp, *design.nb, W, dW);
            out.X = A * W;
            out.X_rho = A * dW;
        } else {
            out.X = A * spatial_weights(sp, *design.nb);
        }
    } else {
        out.X = A;
        if (need_rho_grad) out.X_rho = Eigen::MatrixXd::Zero(T, m);
    }

#pragma omp parallel for schedule(static)
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < m; ++i) {
            double eta = values(layout.end_intercept_base + (layout.end_intercept_count == 1 ? 0 : i));
            for (int c = 0; c < layout.end_cov_count; ++c)
                eta += values(layout.end_cov_base + c) * design.end_covs(t, c);
            for (int k = 0; k < layout.end_harm_pairs; ++k)
                eta += values(layout.end_harm_base + 2 * k) * design.sin_nu(t, k) +
                       values(layout.end_harm_base + 2 * k + 1) * design.cos_nu(t, k);
            out.nu(t, i) = exp_pos(eta);

            double zeta = values(layout.epi_intercept_base + (layout.epi_intercept_count == 1 ? 0 : i));
            if (layout.tau_index >= 0) zeta += values(layout.tau_index) * design.log_pop_share(i);
            for (int c = 0; c < layout.epi_cov_count; ++c)
                zeta += values(layout.epi_cov_base + c) * design.epi_covs(t, c);
            for (int k = 0; k < layout.epi_harm_pairs; ++k)
                zeta += values(layout.epi_harm_base + 2 * k) * design.sin_phi(t, k) +
                        values(layout.epi_harm_base + 2 * k + 1) * design.cos_phi(t, k);
            out.phi(t, i) = exp_pos(zeta);
        }
    }

    out.lambda = out.nu + out.phi.cwiseProduct(out.X);
    return out;
}

MeanPanel conditional_mean(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data) {
    const Design design = build_design(spec, data);
    const MeanParts parts = evaluate_mean_parts(spec, coeffs.layout, design, coeffs.values);
    MeanPanel out;
    out.first_valid = parts.first_valid;
    out.nu = parts.nu;
    out.epidemic = parts.phi.cwiseProduct(parts.X);
    out.lambda = parts.lambda;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < out.first_valid; ++t) {
        out.epidemic.row(t).setConstant(nan);
        out.lambda.row(t).setConstant(nan);
    }
    return out;
}

double linear_predictor_endemic(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data, int t,
                                int i) {
    const Design design = build_design(spec, data);
    const MeanParts parts = evaluate_mean_parts(spec, coeffs.layout, design, coeffs.values);
    return std::log(parts.nu(t - 1, i - 1));
}

double linear_predictor_epidemic(const ModelSpec& spec, const CoefficientSet& coeffs, const Dataset& data, int t,
                                 int i) {
    const Design design = build_design(spec, data);
    const MeanParts parts = evaluate_mean_parts(spec, coeffs.layout, design, coeffs.values);
    return std::log(parts.phi(t - 1, i - 1));
}

} // namespace eefit
