#pragma once

#include <Eigen/Dense>
#include <string>

#include "eefit/data.hpp"

namespace eefit {

enum class SiFamily { fixed, shifted_poisson, triangular, geometric, unrestricted };

SiFamily si_family_from_string(const std::string& name);
std::string to_string(SiFamily family);

// Discrete serial-interval weighting scheme over lags d = 1..p.
struct SerialIntervalSpec {
    SiFamily family = SiFamily::fixed;
    int p = 1;
    double kappa = 0.5;      // shifted_poisson: > 0; triangular/geometric: in (0,1)
    Eigen::VectorXd logits;  // unrestricted: p-1 free logits, lag 1 is the reference

    bool parametric() const {
        return family == SiFamily::shifted_poisson || family == SiFamily::triangular ||
               family == SiFamily::geometric;
    }
    // Free weighting parameters counted by the AIC; every family
    // degenerates to all mass on lag 1 when p = 1.
    int n_free() const {
        if (family == SiFamily::unrestricted) return p - 1;
        return (parametric() && p >= 2) ? 1 : 0;
    }
    void validate() const;
};

// Normalized lag weights: probability vector over d = 1..p.
Eigen::VectorXd lag_weights(const SerialIntervalSpec& spec);

// kappa mapped to the real line (log for shifted_poisson, logit otherwise)
// and back; the inverse maps any real into the family domain.
double kappa_to_real(SiFamily family, double kappa);
double kappa_from_real(SiFamily family, double x);

enum class SpatialKind { power_law, identity };

struct SpatialWeightSpec {
    SpatialKind kind = SpatialKind::identity;
    double rho = 0.0; // power-law decay, >= 0

    void validate() const;
};

// Row-normalized m x m coupling matrix; entry (j,i) is the weight of
// source unit j on destination unit i.
Eigen::MatrixXd spatial_weights(const SpatialWeightSpec& spec, const NeighbourhoodMatrix& nb);

// W plus dW/drho (of the normalized weights) for the power law.
void spatial_weights_with_grad(const SpatialWeightSpec& spec, const NeighbourhoodMatrix& nb, Eigen::MatrixXd& W,
                               Eigen::MatrixXd& dW_drho);

} // namespace eefit
