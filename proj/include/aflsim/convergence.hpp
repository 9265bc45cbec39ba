#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aflsim/errors.hpp"
#include "aflsim/profile.hpp"

namespace aflsim {

/// Key convergence factor for a device running k local steps at rate delta:
///
///   phi = ((k*alpha + delta*beta)^2 * (2 - delta) + T^2) / (T^2 * k * sqrt(delta))
///
/// where T is the global round duration. Smaller is faster convergence; the
/// numerator penalizes staleness (cycle time relative to T), the denominator
/// rewards local work and retained gradient mass.
inline double phi(int k, double delta, double alpha, double beta, double round_duration) {
    if (k < 1) throw ArgumentError("phi: k must be >= 1");
    if (!(delta > 0.0) || delta > 1.0) throw ArgumentError("phi: delta must be in (0, 1]");
    if (alpha < 0.0 || beta < 0.0) throw ArgumentError("phi: alpha and beta must be >= 0");
    if (round_duration <= 0.0) throw ArgumentError("phi: round duration must be > 0");

    const double cycle = static_cast<double>(k) * alpha + delta * beta;
    const double t2 = round_duration * round_duration;
    return (cycle * cycle * (2.0 - delta) + t2) / (t2 * static_cast<double>(k) * std::sqrt(delta));
}

/// Search box for the per-device parameter choice.
struct OptimizerBounds {
    int k_min = 10;
    int k_max = 60;
    double delta_min = 0.001;
    double delta_max = 0.5;
    double round_duration = 1.0;
    int k_grid_step = 1;
    int delta_grid_points = 64;

    void validate() const {
        if (k_min < 1 || k_max < k_min) throw ConfigError("bounds: need 1 <= k_min <= k_max");
        if (!(delta_min > 0.0) || delta_max < delta_min || delta_max > 1.0) {
            throw ConfigError("bounds: need 0 < delta_min <= delta_max <= 1");
        }
        if (round_duration <= 0.0) throw ConfigError("bounds: round duration must be > 0");
        if (k_grid_step < 1) throw ConfigError("bounds: k_grid_step must be >= 1");
        if (delta_grid_points < 1) throw ConfigError("bounds: delta_grid_points must be >= 1");
    }
};

/// Log-spaced candidate rates in [delta_min, delta_max]. A collapsed range
/// yields the single exact value.
inline std::vector<double> delta_grid(const OptimizerBounds& b) {
    b.validate();
    if (b.delta_min == b.delta_max || b.delta_grid_points == 1) return {b.delta_min};
    std::vector<double> grid(static_cast<std::size_t>(b.delta_grid_points));
    const double log_lo = std::log(b.delta_min);
    const double log_hi = std::log(b.delta_max);
    for (int j = 0; j < b.delta_grid_points; ++j) {
        const double f = static_cast<double>(j) / static_cast<double>(b.delta_grid_points - 1);
        grid[static_cast<std::size_t>(j)] = std::exp(log_lo + f * (log_hi - log_lo));
    }
    grid.front() = b.delta_min;  // pin endpoints against exp/log rounding
    grid.back() = b.delta_max;
    return grid;
}

struct ChosenParams {
    int k = 1;
    double delta = 1.0;
    double phi_value = 0.0;
};

/// Grid argmin of phi over k in {k_min, k_min+step, ...} x the log-spaced
/// delta grid. Ties resolve to the smaller k, then the smaller delta, by
/// scanning both axes in ascending order and replacing only on strict
/// improvement.
inline ChosenParams optimize_params(double alpha, double beta, const OptimizerBounds& bounds) {
    bounds.validate();
    if (alpha < 0.0 || beta < 0.0) throw ArgumentError("optimize_params: alpha, beta must be >= 0");
    const std::vector<double> deltas = delta_grid(bounds);

    ChosenParams best;
    bool found = false;
    for (int k = bounds.k_min; k <= bounds.k_max; k += bounds.k_grid_step) {
        for (double d : deltas) {
            const double value = phi(k, d, alpha, beta, bounds.round_duration);
            if (!found || value < best.phi_value) {
                best = {k, d, value};
                found = true;
            }
        }
    }
    if (!found) throw ConfigError("optimize_params: empty search grid");
    return best;
}

/// Default round duration when the config says "auto": the median over
/// devices of the cycle time at the grid midpoints, k_mid = (k_min+k_max)/2
/// and delta_mid = sqrt(delta_min*delta_max) (the geometric midpoint of the
/// log-spaced axis). Even-count medians average the two middle values.
inline double auto_round_duration(const std::vector<DeviceProfile>& profiles,
                                  const OptimizerBounds& bounds) {
    bounds.validate();
    if (profiles.empty()) throw ConfigError("auto round duration: no device profiles");
    const double k_mid = 0.5 * static_cast<double>(bounds.k_min + bounds.k_max);
    const double delta_mid = std::sqrt(bounds.delta_min * bounds.delta_max);
    std::vector<double> cycles;
    cycles.reserve(profiles.size());
    for (const auto& p : profiles) cycles.push_back(k_mid * p.alpha + delta_mid * p.beta);
    std::sort(cycles.begin(), cycles.end());
    const std::size_t n = cycles.size();
    if (n % 2 == 1) return cycles[n / 2];
    return 0.5 * (cycles[n / 2 - 1] + cycles[n / 2]);
}

}  // namespace aflsim
