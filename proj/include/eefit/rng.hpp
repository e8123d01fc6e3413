#pragma once

#include <cstdint>
#include <random>

namespace eefit {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic sub-seed for a work unit, e.g. (seed, origin, path).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (a + 0x9E3779B97F4A7C15ULL));
    h = splitmix64(h ^ (b + 0xD1B54A32D192ED03ULL));
    h = splitmix64(h ^ (c + 0x8BB84B93962EACC9ULL));
    return h;
}

// Seedable mt19937_64 with samplers implemented here so draws are
// identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform on (0,1), never exactly 0 or 1
    double uniform01() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    // Marsaglia-Tsang; unit scale
    double gamma(double shape) {
        if (shape < 1.0) {
            double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    long poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) return poisson_inversion(mean);
        return poisson_ptrs(mean);
    }

    // mean/overdispersion parameterization; variance = mean + disp * mean^2
    long neg_binomial(double mean, double disp) {
        if (disp <= 0.0) return poisson(mean);
        const double shape = 1.0 / disp;
        const double g = gamma(shape) * disp * mean;
        return poisson(g);
    }

private:
    long poisson_inversion(double mean) {
        double p = std::exp(-mean);
        double cum = p;
        double u = uniform01();
        long k = 0;
        while (u > cum) {
            ++k;
            p *= mean / static_cast<double>(k);
            cum += p;
            if (k > 10000) break;
        }
        return k;
    }

    // transformed rejection with squeeze (Hormann), exact for large means
    long poisson_ptrs(double mean) {
        const double b = 0.931 + 2.53 * std::sqrt(mean);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        const double log_mean = std::log(mean);
        for (;;) {
            double u = uniform01() - 0.5;
            double v = uniform01();
            double us = 0.5 - std::abs(u);
            double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                kf * log_mean - mean - std::lgamma(kf + 1.0))
                return static_cast<long>(kf);
        }
    }

    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace eefit
