#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "waterscreen/errors.hpp"
#include "waterscreen/hash.hpp"

namespace waterscreen {

// splitmix64 output function. Used both as the counter-mode generator core
// and as the mixer when deriving child streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based stream keyed by content, not call order. Any (seed, labels)
// path yields the same values no matter which thread draws them or what ran
// before, which is what makes multithreaded synthesis reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x77617465727363ULL)) {}

    Rng child(std::uint64_t label) const {
        Rng r(*this);
        r.key_ = splitmix64(key_ ^ splitmix64(label ^ 0xa5a5a5a5a5a5a5a5ULL));
        r.counter_ = 0;
        return r;
    }

    Rng child(std::string_view label) const { return child(fnv1a64(label)); }

    std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform in [0,1), 53-bit mantissa.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Box-Muller cosine branch; one normal per two uniforms, no cached state.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Knuth's product method below lambda=30, Hormann's PTRS transformed
    // rejection above. Hand-rolled so draws match across standard libraries.
    long long next_poisson(double lambda) {
        if (std::isnan(lambda)) throw NumericError("poisson rate is NaN");
        if (lambda <= 0.0) return 0;
        if (lambda < 30.0) {
            const double limit = std::exp(-lambda);
            long long k = 0;
            double p = 1.0;
            do {
                ++k;
                p *= next_double();
            } while (p > limit);
            return k - 1;
        }
        const double slam = std::sqrt(lambda);
        const double loglam = std::log(lambda);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = next_double() - 0.5;
            double v = next_double();
            double us = 0.5 - std::fabs(u);
            double kd = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<long long>(kd);
            if (kd < 0.0 || (us < 0.013 && v > us)) continue;
            double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
            double rhs = -lambda + kd * loglam - std::lgamma(kd + 1.0);
            if (lhs <= rhs) return static_cast<long long>(kd);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace waterscreen
