#pragma once

#include <cmath>

#include "eefit/mathutil.hpp"

namespace eefit {

// log P(Y = y) for the mean/overdispersion parameterization with
// variance lambda + psi * lambda^2; psi = 0 is the Poisson limit.
inline double nb_logpmf(long y, double lambda, double psi) {
    if (psi <= 0.0)
        return y * std::log(lambda) - lambda - std::lgamma(static_cast<double>(y) + 1.0);
    const double r = 1.0 / psi;
    if (r >= 1e5) {
        // lgamma(y+r) - lgamma(r) cancels catastrophically for large r;
        // expand it by Stirling and fold y*log(psi*lambda) + y*log(r+y)
        // into y*log(lambda) + y*log1p(psi*y), which stays well scaled
        const double yd = static_cast<double>(y);
        double lp = (r - 0.5) * std::log1p(yd / r) - std::log1p(psi * lambda) / psi -
                    std::lgamma(yd + 1.0) - (yd / 12.0) * psi * psi / (1.0 + psi * yd);
        if (y > 0)
            lp += yd * (std::log(lambda) + std::log1p(psi * yd) - 1.0 - std::log1p(psi * lambda));
        return lp;
    }
    double lp = std::lgamma(y + r) - std::lgamma(r) - std::lgamma(static_cast<double>(y) + 1.0) -
                std::log1p(psi * lambda) / psi;
    if (y > 0) lp += y * (std::log(psi * lambda) - std::log1p(psi * lambda));
    return lp;
}

inline double nb_dlogpmf_dlambda(long y, double lambda, double psi) {
    if (psi <= 0.0) return static_cast<double>(y) / lambda - 1.0;
    const double r = 1.0 / psi;
    const double num = (y > 0) ? static_cast<double>(y) / lambda : 0.0;
    return num - (y + r) / (r + lambda);
}

// derivative with respect to log(psi)
inline double nb_dlogpmf_dlogpsi(long y, double lambda, double psi) {
    if (psi <= 0.0) return 0.0;
    const double r = 1.0 / psi;
    const double dr = digamma(y + r) - digamma(r) - std::log1p(psi * lambda) + 1.0 - (y + r) / (r + lambda);
    return -r * dr;
}

} // namespace eefit
