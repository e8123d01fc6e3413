#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace eefit {

inline double logit(double x) {
    return std::log(x / (1.0 - x));
}

// Maps any real into the open unit interval (clamped away from 0 and 1).
inline double expit(double x) {
    double v = 1.0 / (1.0 + std::exp(-x));
    const double eps = 1e-12;
    if (v < eps) v = eps;
    if (v > 1.0 - eps) v = 1.0 - eps;
    return v;
}

// exp clamped to a positive finite range, for log-scale parameters.
inline double exp_pos(double x) {
    if (x < -650.0) return std::exp(-650.0);
    if (x > 650.0) return std::exp(650.0);
    return std::exp(x);
}

inline double logsumexp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs)
        if (x > m) m = x;
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// digamma(x) for x > 0: recurrence up to x >= 6, then asymptotic series.
inline double digamma(double x) {
    double result = 0.0;
    // recurse up far enough that the truncated Bernoulli tail is < 1e-14
    while (x < 12.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Bernoulli-number series
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    return result;
}

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

} // namespace eefit
