#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aflsim/errors.hpp"
#include "aflsim/rng.hpp"

namespace aflsim {

/// Per-device timing constants and chosen training parameters:
/// alpha = seconds per local iteration, beta = seconds to transmit one
/// uncompressed gradient, k = local updating frequency, delta = top-k rate.
struct DeviceProfile {
    double alpha = 0.0;
    double beta = 0.0;
    int k = 1;
    double delta = 1.0;

    bool operator==(const DeviceProfile&) const = default;

    void validate() const {
        if (alpha <= 0.0 || beta <= 0.0) {
            throw ConfigError("device profile: alpha and beta must be > 0");
        }
        if (k < 1) throw ConfigError("device profile: k must be >= 1");
        if (!(delta > 0.0) || delta > 1.0) {
            throw ConfigError("device profile: delta must be in (0, 1]");
        }
    }
};

/// Seconds one full train-and-transmit cycle takes: k*alpha + delta*beta.
inline double device_round_duration(const DeviceProfile& p) {
    p.validate();
    return static_cast<double>(p.k) * p.alpha + p.delta * p.beta;
}

/// Ground-truth heterogeneity draw. alpha_i ~ Uniform[base, multiplier*base];
/// beta_i = model bits / bandwidth with bandwidth_i ~ Uniform[min, max] Mb/s
/// (1 Mb/s = 1e6 bit/s). Draw order: per device, alpha then bandwidth.
struct HeterogeneitySpec {
    double alpha_base = 1e-3;
    double alpha_range_multiplier = 4.0;
    double bandwidth_min_mbps = 0.25;
    double bandwidth_max_mbps = 2.0;

    void validate() const {
        if (alpha_base <= 0.0) throw ConfigError("heterogeneity: alpha_base must be > 0");
        if (alpha_range_multiplier < 1.0) {
            throw ConfigError("heterogeneity: alpha_range_multiplier must be >= 1");
        }
        if (bandwidth_min_mbps <= 0.0 || bandwidth_max_mbps < bandwidth_min_mbps) {
            throw ConfigError("heterogeneity: bandwidth range invalid");
        }
    }
};

inline std::vector<DeviceProfile> sample_heterogeneity(const HeterogeneitySpec& spec,
                                                       std::size_t n_devices,
                                                       std::uint64_t model_bytes,
                                                       std::uint64_t seed) {
    spec.validate();
    if (n_devices == 0) throw ConfigError("heterogeneity: n_devices must be >= 1");
    Rng rng(seed);
    std::vector<DeviceProfile> profiles(n_devices);
    for (auto& p : profiles) {
        p.alpha = rng.uniform(spec.alpha_base, spec.alpha_range_multiplier * spec.alpha_base);
        const double bandwidth_mbps = rng.uniform(spec.bandwidth_min_mbps, spec.bandwidth_max_mbps);
        p.beta = static_cast<double>(model_bytes) * 8.0 / (bandwidth_mbps * 1e6);
    }
    return profiles;
}

struct ProfileEstimate {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Profiling phase of the protocol, reproduced in simulation. alpha is the
/// mean of probe_rounds timed iterations; beta is the least-squares
/// through-origin slope of transmission time vs probe rate
/// (sum(t*delta) / sum(delta^2); the time model has no intercept).
/// noise_std adds multiplicative Gaussian noise (1 + N(0, noise_std)) to
/// each simulated measurement, clamped to stay positive.
inline ProfileEstimate estimate_profile(double true_alpha, double true_beta, int probe_rounds,
                                        const std::vector<double>& probe_deltas,
                                        double noise_std = 0.0, std::uint64_t seed = 0) {
    if (true_alpha <= 0.0 || true_beta <= 0.0) {
        throw ArgumentError("estimate_profile: ground truth must be positive");
    }
    if (probe_rounds < 1) throw ArgumentError("estimate_profile: probe_rounds must be >= 1");
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < probe_deltas.size(); ++i) {
        if (!(probe_deltas[i] > 0.0) || probe_deltas[i] > 1.0) {
            throw ArgumentError("estimate_profile: probe deltas must be in (0, 1]");
        }
        bool repeated = false;
        for (std::size_t j = 0; j < i; ++j) repeated = repeated || probe_deltas[j] == probe_deltas[i];
        if (!repeated) ++distinct;
    }
    if (distinct < 2) {
        throw EstimationError("estimate_profile: need at least 2 distinct probe deltas");
    }

    Rng rng(seed);
    const auto measure = [&](double truth) {
        if (noise_std <= 0.0) return truth;
        const double factor = std::max(1e-6, 1.0 + rng.normal(0.0, noise_std));
        return truth * factor;
    };

    double alpha_sum = 0.0;
    for (int r = 0; r < probe_rounds; ++r) alpha_sum += measure(true_alpha);

    double num = 0.0;
    double den = 0.0;
    for (double d : probe_deltas) {
        const double t = measure(true_beta * d);
        num += t * d;
        den += d * d;
    }
    return {alpha_sum / probe_rounds, num / den};
}

}  // namespace aflsim
