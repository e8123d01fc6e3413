#include "eefit/weights.hpp"

#include <cmath>

#include "eefit/errors.hpp"
#include "eefit/mathutil.hpp"

namespace eefit {

SiFamily si_family_from_string(const std::string& name) {
    if (name == "fixed") return SiFamily::fixed;
    if (name == "shifted_poisson" || name == "poisson") return SiFamily::shifted_poisson;
    if (name == "triangular") return SiFamily::triangular;
    if (name == "geometric") return SiFamily::geometric;
    if (name == "unrestricted") return SiFamily::unrestricted;
    throw ConfigError("unknown serial interval family '" + name + "'");
}

std::string to_string(SiFamily family) {
    switch (family) {
        case SiFamily::fixed: return "fixed";
        case SiFamily::shifted_poisson: return "shifted_poisson";
        case SiFamily::triangular: return "triangular";
        case SiFamily::geometric: return "geometric";
        case SiFamily::unrestricted: return "unrestricted";
    }
    return "?";
}

void SerialIntervalSpec::validate() const {
    if (p < 1) throw ConfigError("serial interval order p must be >= 1");
    if (family == SiFamily::shifted_poisson && !(kappa > 0.0))
        throw ConfigError("shifted_poisson kappa must be > 0");
    if ((family == SiFamily::triangular || family == SiFamily::geometric) && !(kappa > 0.0 && kappa < 1.0))
        throw ConfigError("kappa must be in (0,1) for " + to_string(family));
    if (family == SiFamily::unrestricted && logits.size() != p - 1)
        throw ConfigError("unrestricted weights need p-1 logit parameters");
}

Eigen::VectorXd lag_weights(const SerialIntervalSpec& spec) {
    spec.validate();
    const int p = spec.p;
    Eigen::VectorXd u(p);

    switch (spec.family) {
        case SiFamily::fixed:
            u.setZero();
            u(0) = 1.0;
            return u;
        case SiFamily::shifted_poisson: {
            // log-space Poisson(kappa) pmf at d-1, stable for any kappa
            Eigen::VectorXd logu(p);
            for (int d = 1; d <= p; ++d)
                logu(d - 1) = (d - 1) * std::log(spec.kappa) - std::lgamma(static_cast<double>(d)) - spec.kappa;
            double m = logu.maxCoeff();
            for (int d = 0; d < p; ++d) u(d) = std::exp(logu(d) - m);
            break;
        }
        case SiFamily::triangular:
            for (int d = 1; d <= p; ++d) u(d - 1) = std::max(1.0 - spec.kappa * d, 0.0);
            break;
        case SiFamily::geometric:
            for (int d = 1; d <= p; ++d)
                u(d - 1) = std::pow(1.0 - spec.kappa, d - 1) * spec.kappa;
            break;
        case SiFamily::unrestricted: {
            Eigen::VectorXd s(p);
            s(0) = 0.0;
            for (int d = 1; d < p; ++d) s(d) = spec.logits(d - 1);
            double m = s.maxCoeff();
            for (int d = 0; d < p; ++d) u(d) = std::exp(s(d) - m);
            break;
        }
    }

    const double total = u.sum();
    if (!(total > 0.0) || !std::isfinite(total))
        throw ConfigError("serial interval weights are all zero, cannot normalize");
    return u / total;
}

double kappa_to_real(SiFamily family, double kappa) {
    switch (family) {
        case SiFamily::shifted_poisson: return std::log(kappa);
        case SiFamily::triangular:
        case SiFamily::geometric: return logit(kappa);
        default: throw ConfigError("family " + to_string(family) + " has no weighting parameter");
    }
}

double kappa_from_real(SiFamily family, double x) {
    switch (family) {
        case SiFamily::shifted_poisson: return exp_pos(x);
        case SiFamily::triangular:
        case SiFamily::geometric: return expit(x);
        default: throw ConfigError("family " + to_string(family) + " has no weighting parameter");
    }
}

void SpatialWeightSpec::validate() const {
    if (kind == SpatialKind::power_law && (!(rho >= 0.0) || !std::isfinite(rho)))
        throw ConfigError("power law decay rho must be finite and >= 0");
}

Eigen::MatrixXd spatial_weights(const SpatialWeightSpec& spec, const NeighbourhoodMatrix& nb) {
    spec.validate();
    const int m = static_cast<int>(nb.order.rows());
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
    if (spec.kind == SpatialKind::identity) {
        W.setIdentity();
        return W;
    }
    for (int j = 0; j < m; ++j) {
        double row_sum = 0.0;
        for (int i = 0; i < m; ++i) {
            W(j, i) = std::pow(nb.order(j, i) + 1.0, -spec.rho);
            row_sum += W(j, i);
        }
        W.row(j) /= row_sum;
    }
    return W;
}

void spatial_weights_with_grad(const SpatialWeightSpec& spec, const NeighbourhoodMatrix& nb, Eigen::MatrixXd& W,
                               Eigen::MatrixXd& dW_drho) {
    W = spatial_weights(spec, nb);
    const int m = static_cast<int>(nb.order.rows());
    dW_drho = Eigen::MatrixXd::Zero(m, m);
    if (spec.kind == SpatialKind::identity) return;
    for (int j = 0; j < m; ++j) {
        double b = 0.0;
        for (int i = 0; i < m; ++i) b += W(j, i) * std::log(nb.order(j, i) + 1.0);
        for (int i = 0; i < m; ++i) dW_drho(j, i) = W(j, i) * (b - std::log(nb.order(j, i) + 1.0));
    }
}

} // namespace eefit
