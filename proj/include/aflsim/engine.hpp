#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "aflsim/compression.hpp"
#include "aflsim/dataset.hpp"
#include "aflsim/errors.hpp"
#include "aflsim/metrics.hpp"
#include "aflsim/model.hpp"
#include "aflsim/param_vector.hpp"
#include "aflsim/profile.hpp"
#include "aflsim/rng.hpp"
#include "aflsim/strategies.hpp"

namespace aflsim {

// Round bookkeeping convention, used consistently below:
//  - server.round counts aggregations applied so far. For the periodic
//    trigger it equals the boundary index: the round-t boundary fires at
//    exactly t * round_duration and closes the window [ (t-1)*T, t*T ).
//  - last_included[i] is the round counter at device i's most recent
//    dispatch; the initial broadcast at time 0 counts as inclusion at 0.
//  - a gradient's staleness is (round counter of the aggregation consuming
//    it) - last_included[i], so origin_round + staleness = consuming round
//    and staleness >= 1 for every buffered entry. The per-arrival rule
//    instead counts aggregations applied since dispatch, which starts at 0.

/// Timestamped simulator event. Boundaries sort before arrivals at equal
/// times (a gradient landing exactly on a boundary belongs to the next
/// window), then by device id.
struct SimEvent {
    double time = 0.0;
    enum class Kind { round_boundary = 0, gradient_arrival = 1 } kind = Kind::round_boundary;
    int device_id = -1;       // gradient_arrival only
    int boundary_index = 0;   // round_boundary only

    friend bool operator>(const SimEvent& a, const SimEvent& b) {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
        return a.device_id > b.device_id;
    }
};

struct DeviceState {
    int id = 0;
    DeviceProfile profile;
    int current_base_round = 0;   // round counter at the last dispatch
    ParamVector base_model;       // global model the device is training from
    std::uint64_t rng_stream = 0;
    int cycles_started = 0;
    // in-flight gradient, filled at dispatch and consumed once it arrives
    SparseGradient outgoing;
    double outgoing_loss = 0.0;
};

struct BufferEntry {
    int device_id = 0;
    SparseGradient gradient;
    int staleness = 0;
    double local_loss = 0.0;
};

/// Gradients received within one aggregation window.
struct RoundBuffer {
    int round = 0;  // server.round while the buffer was filling
    std::vector<BufferEntry> entries;
};

struct ServerState {
    int round = 0;
    ParamVector global_model;
    double eta_g = 1.0;
    double round_duration = 1.0;
    std::vector<int> last_included;  // per device

    void validate() const {
        if (round_duration <= 0.0) throw ConfigError("server: round duration must be > 0");
    }
};

/// Staleness by the round-difference rule: current round t minus the round
/// of the device's most recent inclusion (initial broadcast counts as
/// round 0).
inline int staleness_of(const ServerState& server, int device_id, int t) {
    if (device_id < 0 || static_cast<std::size_t>(device_id) >= server.last_included.size()) {
        throw LookupError("staleness_of: unknown device " + std::to_string(device_id));
    }
    return t - server.last_included[static_cast<std::size_t>(device_id)];
}

/// Mean-of-gradients global step: w <- w - eta_g/|S| * sum(densify(g)).
/// An empty buffer leaves the model untouched. Either way the round counter
/// advances and contributing devices are recorded in last_included.
inline ParamVector global_aggregate(ServerState& server, const RoundBuffer& buffer) {
    if (buffer.round != server.round) {
        throw InternalError("global_aggregate: buffer round " + std::to_string(buffer.round) +
                            " does not match server round " + std::to_string(server.round));
    }
    const int new_round = server.round + 1;
    if (!buffer.entries.empty()) {
        ParamVector sum(server.global_model.size(), 0.0);
        for (const auto& entry : buffer.entries) {
            if (entry.gradient.full_dim != server.global_model.size()) {
                throw CorruptionError("global_aggregate: gradient dim mismatch");
            }
            for (std::size_t i = 0; i < entry.gradient.indices.size(); ++i) {
                sum[entry.gradient.indices[i]] += entry.gradient.values[i];
            }
        }
        const double scale = server.eta_g / static_cast<double>(buffer.entries.size());
        axpy(-scale, sum, server.global_model);
    }
    server.round = new_round;
    for (const auto& entry : buffer.entries) {
        server.last_included[static_cast<std::size_t>(entry.device_id)] = new_round;
    }
    return server.global_model;
}

struct SimulationConfig {
    ModelSpec model;
    ParamVector initial_model;          // broadcast weights w at round 0
    Dataset train;                      // whole training set (round-0 loss report)
    std::vector<Dataset> device_data;   // one shard per device
    Dataset test;
    std::vector<DeviceProfile> profiles;  // alpha, beta, k, delta per device
    AggregationPolicy policy;
    double round_duration = 1.0;  // T for the periodic trigger
    int total_rounds = 100;       // aggregations to run
    double max_sim_time = std::numeric_limits<double>::infinity();  // optional horizon
    double stop_at_accuracy = 0.0;  // end the run at the first evaluation >= this; 0 disables
    double eta_l = 0.05;
    double eta_g = 1.0;
    double momentum = 0.0;
    std::size_t batch_size = 32;
    int eval_stride = 1;
    std::uint64_t seed = 1;  // engine stream root; device i trains cycle c with
                             // derive_seed(derive_seed(seed, i), c)
    std::ostream* trace = nullptr;  // optional TSV event trace
};

struct SimulationResult {
    std::vector<MetricsRecord> metrics;
    ParamVector final_model;
    std::uint64_t arrivals_received = 0;
    std::uint64_t gradients_aggregated = 0;
    std::uint64_t discarded_at_end = 0;  // partial count-trigger buffer
    std::uint64_t cumulative_uplink_bytes = 0;
    double final_sim_time = 0.0;
};

namespace detail {

inline void trace_line(std::ostream* trace, double time, const char* kind, int device, int round,
                       int staleness, std::uint64_t bytes) {
    if (!trace) return;
    (*trace) << format_double(time) << '\t' << kind << '\t' << device << '\t' << round << '\t'
             << staleness << '\t' << bytes << '\n';
}

}  // namespace detail

/// Deterministic single-threaded event loop implementing the asynchronous
/// train -> compress -> transmit cycle against a pluggable aggregation
/// policy. Fixed config + seed reproduces the run bit for bit.
inline SimulationResult run_simulation(const SimulationConfig& cfg) {
    cfg.model.validate();
    const std::size_t n_devices = cfg.profiles.size();
    if (n_devices == 0) throw ConfigError("simulation: needs at least one device");
    if (cfg.device_data.size() != n_devices) {
        throw ConfigError("simulation: device_data count does not match profiles");
    }
    if (cfg.total_rounds < 1) throw ConfigError("simulation: total_rounds must be >= 1");
    for (const auto& p : cfg.profiles) p.validate();

    const bool buffered = cfg.policy.trigger != Trigger::per_arrival;
    const int fire_count = (cfg.policy.trigger == Trigger::count)
                               ? cfg.policy.buffer_count
                               : (cfg.policy.trigger == Trigger::synchronous_barrier
                                      ? static_cast<int>(n_devices)
                                      : 0);
    if (cfg.policy.trigger == Trigger::count && fire_count < 1) {
        throw ConfigError("simulation: count trigger needs buffer_count >= 1");
    }

    if (cfg.initial_model.size() != cfg.model.param_count()) {
        throw ShapeError("simulation: initial model does not match the model spec");
    }

    ServerState server;
    server.global_model = cfg.initial_model;
    server.eta_g = cfg.eta_g;
    server.round_duration = cfg.round_duration;
    server.last_included.assign(n_devices, 0);
    server.validate();

    std::vector<DeviceState> devices(n_devices);
    for (std::size_t i = 0; i < n_devices; ++i) {
        devices[i].id = static_cast<int>(i);
        devices[i].profile = cfg.profiles[i];
        devices[i].rng_stream = derive_seed(cfg.seed, i);
        if (cfg.device_data[i].size() == 0) {
            throw ConfigError("simulation: device " + std::to_string(i) + " has no data");
        }
    }

    std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<SimEvent>> queue;
    SimulationResult result;
    RoundBuffer buffer;
    double now = 0.0;
    double last_train_loss = 0.0;
    bool stop = false;

    // Train one cycle from the current global model and put the compressed
    // gradient on the wire; the arrival lands a full device cycle later.
    const auto dispatch = [&](DeviceState& dev, double at) {
        dev.current_base_round = server.round;
        dev.base_model = server.global_model;
        const std::uint64_t train_seed = derive_seed(dev.rng_stream, dev.cycles_started);
        LocalTrainResult trained =
            local_train(dev.base_model, dev.profile.k, cfg.eta_l, cfg.device_data[dev.id],
                        cfg.batch_size, cfg.model, train_seed, cfg.momentum);
        dev.outgoing = topk_compress(trained.update, CompressionRate(dev.profile.delta),
                                     static_cast<std::uint32_t>(server.round));
        dev.outgoing_loss = trained.final_loss;
        dev.cycles_started += 1;
        queue.push(SimEvent{at + device_round_duration(dev.profile),
                            SimEvent::Kind::gradient_arrival, dev.id, 0});
    };

    const auto evaluate_now = [&](double time, const RoundBuffer& aggregated) {
        MetricsRecord rec;
        rec.sim_time_s = time;
        rec.round = server.round;
        const EvalResult eval = evaluate(server.global_model, cfg.model, cfg.test);
        rec.test_accuracy = eval.accuracy;
        rec.train_loss = last_train_loss;
        rec.cumulative_uplink_bytes = result.cumulative_uplink_bytes;
        rec.included_devices = static_cast<int>(aggregated.entries.size());
        int max_tau = 0;
        double sum_tau = 0.0;
        for (const auto& e : aggregated.entries) {
            max_tau = std::max(max_tau, e.staleness);
            sum_tau += e.staleness;
        }
        rec.max_staleness = max_tau;
        rec.mean_staleness =
            aggregated.entries.empty() ? 0.0 : sum_tau / static_cast<double>(aggregated.entries.size());
        result.metrics.push_back(rec);
        if (cfg.stop_at_accuracy > 0.0 && rec.test_accuracy >= cfg.stop_at_accuracy) {
            result.final_sim_time = time;
            stop = true;
        }
    };

    const auto aggregate_and_redispatch = [&](double at) {
        if (!buffer.entries.empty()) {
            double loss_sum = 0.0;
            for (const auto& e : buffer.entries) {
                result.cumulative_uplink_bytes += wire_size_bytes(e.gradient);
                loss_sum += e.local_loss;
            }
            last_train_loss = loss_sum / static_cast<double>(buffer.entries.size());
            result.gradients_aggregated += buffer.entries.size();
        }
        global_aggregate(server, buffer);
        if (!all_finite(server.global_model)) {
            throw DivergenceError("simulation: global model diverged at round " +
                                  std::to_string(server.round) +
                                  "; lower eta_l or eta_g");
        }
        detail::trace_line(cfg.trace, at, "boundary", -1, server.round, 0, 0);
        for (const auto& e : buffer.entries) {
            dispatch(devices[static_cast<std::size_t>(e.device_id)], at);
        }
        const bool last_round = server.round >= cfg.total_rounds;
        if (server.round % cfg.eval_stride == 0 || last_round) evaluate_now(at, buffer);
        buffer.entries.clear();
        buffer.round = server.round;
        if (last_round) {
            result.final_sim_time = at;
            stop = true;
        }
    };

    // Kickoff: broadcast the initial model to every device at time zero.
    last_train_loss = loss_and_gradient(server.global_model, cfg.model, cfg.train).first;
    evaluate_now(0.0, buffer);
    for (auto& dev : devices) dispatch(dev, 0.0);
    if (cfg.policy.trigger == Trigger::periodic) {
        for (int u = 1; u <= cfg.total_rounds; ++u) {
            queue.push(SimEvent{static_cast<double>(u) * cfg.round_duration,
                                SimEvent::Kind::round_boundary, -1, u});
        }
    }

    while (!stop && !queue.empty()) {
        if (queue.top().time > cfg.max_sim_time) break;
        const SimEvent ev = queue.top();
        queue.pop();
        if (ev.time < now) {
            throw InternalError("simulation: event time regressed from " +
                                std::to_string(now) + " to " + std::to_string(ev.time));
        }
        now = ev.time;

        if (ev.kind == SimEvent::Kind::round_boundary) {
            aggregate_and_redispatch(now);
            continue;
        }

        DeviceState& dev = devices[static_cast<std::size_t>(ev.device_id)];
        result.arrivals_received += 1;

        if (buffered) {
            BufferEntry entry;
            entry.device_id = dev.id;
            entry.gradient = std::move(dev.outgoing);
            entry.local_loss = dev.outgoing_loss;
            entry.staleness = staleness_of(server, dev.id, server.round + 1);
            detail::trace_line(cfg.trace, now, "arrival", dev.id, server.round + 1,
                               entry.staleness, wire_size_bytes(entry.gradient));
            buffer.entries.push_back(std::move(entry));
            if (fire_count > 0 && static_cast<int>(buffer.entries.size()) == fire_count) {
                aggregate_and_redispatch(now);
            }
        } else {
            // per-arrival mix: staleness counts aggregations applied since
            // this device's dispatch, starting at zero
            const int tau = server.round - server.last_included[static_cast<std::size_t>(dev.id)];
            const double weight =
                fedasync_weight(cfg.policy.mix_alpha, tau, cfg.policy.staleness_exponent);
            detail::trace_line(cfg.trace, now, "arrival", dev.id, server.round + 1, tau,
                               wire_size_bytes(dev.outgoing));
            result.cumulative_uplink_bytes += wire_size_bytes(dev.outgoing);
            result.gradients_aggregated += 1;
            last_train_loss = dev.outgoing_loss;

            const ParamVector update = densify(dev.outgoing);
            for (std::size_t i = 0; i < server.global_model.size(); ++i) {
                server.global_model[i] = (1.0 - weight) * server.global_model[i] +
                                         weight * (dev.base_model[i] - update[i]);
            }
            server.round += 1;
            server.last_included[static_cast<std::size_t>(dev.id)] = server.round;
            if (!all_finite(server.global_model)) {
                throw DivergenceError("simulation: global model diverged at round " +
                                      std::to_string(server.round) +
                                      "; lower eta_l or the mix weight");
            }
            detail::trace_line(cfg.trace, now, "boundary", -1, server.round, 0, 0);
            dispatch(dev, now);

            RoundBuffer applied;
            applied.entries.push_back(BufferEntry{dev.id, {}, tau, dev.outgoing_loss});
            const bool last_round = server.round >= cfg.total_rounds;
            if (server.round % cfg.eval_stride == 0 || last_round) evaluate_now(now, applied);
            if (last_round) {
                result.final_sim_time = now;
                stop = true;
            }
        }
    }

    if (!stop) result.final_sim_time = now;
    result.discarded_at_end = buffer.entries.size();
    result.final_model = server.global_model;
    return result;
}

}  // namespace aflsim
