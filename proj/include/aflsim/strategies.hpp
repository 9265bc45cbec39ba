#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aflsim/compression.hpp"
#include "aflsim/convergence.hpp"
#include "aflsim/errors.hpp"
#include "aflsim/profile.hpp"

namespace aflsim {

enum class StrategyKind { fedluck, fedper, fedbuff, fedasync, fedavg_topk };

inline std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::fedluck: return "fedluck";
        case StrategyKind::fedper: return "fedper";
        case StrategyKind::fedbuff: return "fedbuff";
        case StrategyKind::fedasync: return "fedasync";
        case StrategyKind::fedavg_topk: return "fedavg_topk";
    }
    return "?";
}

enum class Trigger { periodic, count, per_arrival, synchronous_barrier };
enum class UpdateRule { mean_step, staleness_weighted_mix };

/// When the server aggregates and how it folds gradients into the model.
struct AggregationPolicy {
    Trigger trigger = Trigger::periodic;
    UpdateRule update_rule = UpdateRule::mean_step;
    int buffer_count = 0;            // count trigger: aggregate every K-th arrival
    double mix_alpha = 0.6;          // staleness_weighted_mix
    double staleness_exponent = 0.5;
};

/// Server/device policy selection plus its hyperparameters.
struct StrategyConfig {
    StrategyKind kind = StrategyKind::fedluck;
    int fixed_k = 30;          // non-fedluck local updating frequency
    double fixed_delta = 0.01;  // non-fedluck compression rate
    int buffer_size = 3;       // fedbuff
    double mix_alpha = 0.6;    // fedasync
    double staleness_exponent = 0.5;
    OptimizerBounds bounds;    // fedluck search box

    void validate() const {
        if (kind == StrategyKind::fedluck) {
            bounds.validate();
            return;
        }
        if (fixed_k < 1) throw ConfigError("strategy: fixed_k must be >= 1");
        if (!(fixed_delta > 0.0) || fixed_delta > 1.0) {
            throw ConfigError("strategy: fixed_delta must be in (0, 1]");
        }
        if (kind == StrategyKind::fedbuff && buffer_size < 1) {
            throw ConfigError("strategy: fedbuff buffer_size must be >= 1");
        }
        if (kind == StrategyKind::fedasync) {
            if (!(mix_alpha > 0.0) || mix_alpha > 1.0) {
                throw ConfigError("strategy: fedasync mix_alpha must be in (0, 1]");
            }
            if (staleness_exponent < 0.0) {
                throw ConfigError("strategy: fedasync staleness_exponent must be >= 0");
            }
        }
    }
};

/// Polynomial staleness decay for the mixing weight: mix_alpha * (tau+1)^-a,
/// clamped into (0, 1].
inline double fedasync_weight(double mix_alpha, int tau, double exponent) {
    if (tau < 0) throw ArgumentError("fedasync_weight: tau must be >= 0");
    const double w = mix_alpha * std::pow(static_cast<double>(tau) + 1.0, -exponent);
    return std::min(1.0, std::max(w, 1e-12));
}

struct DeviceParams {
    int k = 1;
    double delta = 1.0;
};

/// A constructed strategy: the aggregation policy plus the (k_i, delta_i)
/// each device will run with. delta is always snapped to the realized rate
/// ceil(delta*d)/d so the byte and timing models agree with what top-k
/// actually keeps.
struct StrategyPlan {
    AggregationPolicy policy;
    std::vector<DeviceParams> device_params;
};

inline StrategyPlan make_strategy(const StrategyConfig& cfg,
                                  const std::vector<ProfileEstimate>& estimates,
                                  std::size_t model_dim) {
    cfg.validate();
    if (estimates.empty()) throw ConfigError("strategy: no devices");
    if (model_dim == 0) throw ConfigError("strategy: model dim must be positive");

    StrategyPlan plan;
    plan.device_params.resize(estimates.size());

    const auto snapped = [model_dim](int k, double delta) {
        return DeviceParams{k, realized_rate(delta, model_dim)};
    };

    switch (cfg.kind) {
        case StrategyKind::fedluck: {
            plan.policy = {Trigger::periodic, UpdateRule::mean_step};
            for (std::size_t i = 0; i < estimates.size(); ++i) {
                const ChosenParams chosen =
                    optimize_params(estimates[i].alpha, estimates[i].beta, cfg.bounds);
                plan.device_params[i] = snapped(chosen.k, chosen.delta);
            }
            break;
        }
        case StrategyKind::fedper: {
            plan.policy = {Trigger::periodic, UpdateRule::mean_step};
            for (auto& p : plan.device_params) p = snapped(cfg.fixed_k, cfg.fixed_delta);
            break;
        }
        case StrategyKind::fedbuff: {
            plan.policy = {Trigger::count, UpdateRule::mean_step};
            plan.policy.buffer_count = cfg.buffer_size;
            for (auto& p : plan.device_params) p = snapped(cfg.fixed_k, cfg.fixed_delta);
            break;
        }
        case StrategyKind::fedasync: {
            plan.policy = {Trigger::per_arrival, UpdateRule::staleness_weighted_mix};
            plan.policy.mix_alpha = cfg.mix_alpha;
            plan.policy.staleness_exponent = cfg.staleness_exponent;
            for (auto& p : plan.device_params) p = snapped(cfg.fixed_k, cfg.fixed_delta);
            break;
        }
        case StrategyKind::fedavg_topk: {
            // Synchronous barrier: a round closes only when every device's
            // gradient has arrived.
            plan.policy = {Trigger::synchronous_barrier, UpdateRule::mean_step};
            plan.policy.buffer_count = static_cast<int>(estimates.size());
            for (auto& p : plan.device_params) p = snapped(cfg.fixed_k, cfg.fixed_delta);
            break;
        }
    }
    return plan;
}

}  // namespace aflsim
