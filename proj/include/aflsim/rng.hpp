#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "aflsim/errors.hpp"

namespace aflsim {

/// Finalizer of the splitmix64 generator. Used on its own to derive child
/// seeds, so any language can reproduce the seeding scheme from this file.
inline std::uint64_t splitmix64_mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

/// Child seed for stream `index` of a base seed:
///   mix(base + GOLDEN_GAMMA * (index + 1)).
/// index 0 is already distinct from the base seed itself.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64_mix(base + 0x9E3779B97F4A7C15ULL * (index + 1));
}

/// Deterministic splitmix64 stream. All randomness in the library flows
/// through this class; no std:: distribution is used anywhere, so sequences
/// are reproducible bit-for-bit from the documented algorithms alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return splitmix64_mix(state_);
    }

    /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Plain modulo; the bias at 64 bits is
    /// irrelevant next to the reproducibility requirement.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ArgumentError("Rng::below: n must be > 0");
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms per call
    /// (the sine branch is discarded) so draw counts stay predictable.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze for shape >= 1; the
    /// shape < 1 case uses the boost Gamma(shape+1) * U^(1/shape).
    double gamma(double shape) {
        if (shape <= 0.0) throw ArgumentError("Rng::gamma: shape must be > 0");
        if (shape < 1.0) {
            const double u = 1.0 - uniform();  // strictly positive
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = 1.0 - uniform();  // avoid log(0)
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    /// Fisher-Yates shuffle, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace aflsim
