#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aflsim/config.hpp"
#include "aflsim/convergence.hpp"
#include "aflsim/dataset.hpp"
#include "aflsim/engine.hpp"
#include "aflsim/metrics.hpp"
#include "aflsim/partition.hpp"
#include "aflsim/profile.hpp"
#include "aflsim/svg.hpp"

namespace aflsim {

// Seed streams, all derived from the config seed with derive_seed:
//   0 dataset generation, 1 train/test split, 2 partition,
//   3 heterogeneity, 4 model init, 5 profiling noise (per device),
//   100 + cell_index: engine stream of a grid cell. A plain run is cell 0.
inline constexpr std::uint64_t kStreamDataset = 0;
inline constexpr std::uint64_t kStreamSplit = 1;
inline constexpr std::uint64_t kStreamPartition = 2;
inline constexpr std::uint64_t kStreamHeterogeneity = 3;
inline constexpr std::uint64_t kStreamModelInit = 4;
inline constexpr std::uint64_t kStreamProfiling = 5;
inline constexpr std::uint64_t kStreamEngineBase = 100;

/// The strategy-independent half of an experiment: data, shards, model
/// weights, ground-truth device constants and their profiled estimates, and
/// the resolved round duration.
struct PreparedTask {
    ModelSpec model;
    ParamVector initial_model;
    Dataset train;
    Dataset test;
    std::vector<Dataset> shards;
    std::vector<DeviceProfile> ground_truth;      // alpha/beta only; k/delta unset
    std::vector<ProfileEstimate> estimates;
    OptimizerBounds bounds;                       // round_duration resolved
    double round_duration = 0.0;
};

inline PreparedTask prepare_task(const ExperimentConfig& cfg) {
    PreparedTask task;
    task.model = cfg.model;
    task.model.validate();

    Dataset full;
    if (cfg.dataset == "csv") {
        full = load_csv(cfg.csv_path);
    } else {
        SyntheticSpec spec;
        spec.n_samples = cfg.synthetic_samples;
        spec.n_features = cfg.synthetic_features;
        spec.n_classes = cfg.synthetic_classes;
        spec.spread = cfg.synthetic_spread;
        spec.center_box = cfg.synthetic_center_box;
        full = make_synthetic(spec, derive_seed(cfg.seed, kStreamDataset));
    }
    if (full.n_features != task.model.input_dim()) {
        throw ConfigError("model input layer (" + std::to_string(task.model.input_dim()) +
                          ") does not match dataset features (" + std::to_string(full.n_features) + ")");
    }
    if (task.model.loss == Loss::softmax_cross_entropy &&
        task.model.output_dim() < static_cast<std::size_t>(full.n_classes)) {
        throw ConfigError("model output layer smaller than the number of classes");
    }

    auto [train, test] = split_train_test(full, cfg.test_fraction, derive_seed(cfg.seed, kStreamSplit));
    if (cfg.test_fraction == 0.0) test = train;  // evaluate on train when no holdout
    task.train = std::move(train);
    task.test = std::move(test);

    const PartitionPlan plan =
        cfg.partition == PartitionKind::dirichlet
            ? dirichlet_partition(task.train, cfg.devices, cfg.concentration,
                                  derive_seed(cfg.seed, kStreamPartition))
            : iid_partition(task.train, cfg.devices, derive_seed(cfg.seed, kStreamPartition));
    task.shards.reserve(cfg.devices);
    for (const auto& idx : plan.assignments) task.shards.push_back(task.train.select(idx));

    task.initial_model = init_model(task.model, derive_seed(cfg.seed, kStreamModelInit));

    HeterogeneitySpec het;
    het.alpha_base = cfg.alpha_base;
    het.alpha_range_multiplier = cfg.alpha_range_multiplier;
    het.bandwidth_min_mbps = cfg.bandwidth_min_mbps;
    het.bandwidth_max_mbps = cfg.bandwidth_max_mbps;
    const std::uint64_t model_bytes = 4 * static_cast<std::uint64_t>(task.model.param_count());
    task.ground_truth =
        sample_heterogeneity(het, cfg.devices, model_bytes, derive_seed(cfg.seed, kStreamHeterogeneity));

    const std::uint64_t profiling_seed = derive_seed(cfg.seed, kStreamProfiling);
    task.estimates.reserve(cfg.devices);
    for (std::size_t i = 0; i < cfg.devices; ++i) {
        task.estimates.push_back(estimate_profile(
            task.ground_truth[i].alpha, task.ground_truth[i].beta, cfg.profile_probe_rounds,
            cfg.profile_probe_deltas, cfg.profile_noise, derive_seed(profiling_seed, i)));
    }

    task.bounds = cfg.strategy.bounds;
    if (cfg.round_duration_auto) {
        // the server only knows the profiled estimates
        std::vector<DeviceProfile> estimated(cfg.devices);
        for (std::size_t i = 0; i < cfg.devices; ++i) {
            estimated[i].alpha = task.estimates[i].alpha;
            estimated[i].beta = task.estimates[i].beta;
        }
        task.round_duration = auto_round_duration(estimated, task.bounds);
    } else {
        task.round_duration = cfg.round_duration;
    }
    task.bounds.round_duration = task.round_duration;
    return task;
}

struct RunOutput {
    SimulationResult sim;
    std::vector<DeviceProfile> profiles;   // ground truth + chosen (k, delta)
    double round_duration = 0.0;
};

/// Run one simulation of the prepared task under the given strategy
/// overrides. `cell_index` selects the engine seed stream.
inline RunOutput run_prepared(const PreparedTask& task, const ExperimentConfig& cfg,
                              const StrategyConfig& strategy, std::uint64_t cell_index,
                              std::ostream* trace = nullptr) {
    StrategyConfig strat = strategy;
    strat.bounds = task.bounds;

    const StrategyPlan plan = make_strategy(strat, task.estimates, task.model.param_count());

    RunOutput out;
    out.round_duration = task.round_duration;
    out.profiles = task.ground_truth;
    for (std::size_t i = 0; i < out.profiles.size(); ++i) {
        out.profiles[i].k = plan.device_params[i].k;
        out.profiles[i].delta = plan.device_params[i].delta;
    }

    SimulationConfig sim;
    sim.model = task.model;
    sim.initial_model = task.initial_model;
    sim.train = task.train;
    sim.device_data = task.shards;
    sim.test = task.test;
    sim.profiles = out.profiles;
    sim.policy = plan.policy;
    sim.round_duration = task.round_duration;
    sim.total_rounds = cfg.rounds;
    if (cfg.time_budget > 0.0) sim.max_sim_time = cfg.time_budget;
    sim.stop_at_accuracy = cfg.stop_at_accuracy;
    sim.eta_l = cfg.eta_l;
    sim.eta_g = cfg.eta_g;
    sim.momentum = cfg.momentum;
    sim.batch_size = cfg.batch_size;
    sim.eval_stride = cfg.eval_stride;
    sim.seed = derive_seed(cfg.seed, kStreamEngineBase + cell_index);
    sim.trace = trace;
    out.sim = run_simulation(sim);
    return out;
}

namespace detail {

/// Writes files as tmp + rename and removes everything it created if the
/// run fails midway.
class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    void write_file(const std::string& name, const std::string& content) {
        const auto final_path = dir_ / name;
        const auto tmp_path = dir_ / (name + ".tmp");
        {
            std::ofstream out(tmp_path, std::ios::binary);
            if (!out) throw ConfigError("cannot write " + tmp_path.string());
            out << content;
        }
        std::filesystem::rename(tmp_path, final_path);
        written_.push_back(final_path);
    }

    void cleanup() {
        for (const auto& p : written_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
        written_.clear();
    }

    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
};

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

inline std::string double_list_str(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += format_double(values[i]);
    }
    return out;
}

/// Canonical echo of the fully resolved configuration; feeding this file
/// back in reproduces the run byte for byte.
inline std::string resolved_config_text(const ExperimentConfig& cfg, double resolved_round_duration) {
    std::ostringstream out;
    out << "dataset = " << cfg.dataset << "\n";
    if (cfg.dataset == "csv") out << "csv_path = " << cfg.csv_path << "\n";
    out << "test_fraction = " << format_double(cfg.test_fraction) << "\n";
    if (cfg.dataset == "synthetic") {
        out << "synthetic_samples = " << cfg.synthetic_samples << "\n";
        out << "synthetic_features = " << cfg.synthetic_features << "\n";
        out << "synthetic_classes = " << cfg.synthetic_classes << "\n";
        out << "synthetic_spread = " << format_double(cfg.synthetic_spread) << "\n";
        out << "synthetic_center_box = " << format_double(cfg.synthetic_center_box) << "\n";
    }
    out << "layers = ";
    for (std::size_t i = 0; i < cfg.model.layer_sizes.size(); ++i) {
        if (i) out << ",";
        out << cfg.model.layer_sizes[i];
    }
    out << "\n";
    out << "activation = "
        << (cfg.model.activation == Activation::relu
                ? "relu"
                : (cfg.model.activation == Activation::tanh ? "tanh" : "none"))
        << "\n";
    out << "loss = "
        << (cfg.model.loss == Loss::softmax_cross_entropy ? "softmax_cross_entropy" : "mse") << "\n";
    out << "bias = " << bool_str(cfg.model.bias) << "\n";
    out << "devices = " << cfg.devices << "\n";
    out << "partition = " << (cfg.partition == PartitionKind::dirichlet ? "dirichlet" : "iid") << "\n";
    if (cfg.partition == PartitionKind::dirichlet) {
        out << "concentration = " << format_double(cfg.concentration) << "\n";
    }
    out << "alpha_base = " << format_double(cfg.alpha_base) << "\n";
    out << "alpha_range_multiplier = " << format_double(cfg.alpha_range_multiplier) << "\n";
    out << "bandwidth_min_mbps = " << format_double(cfg.bandwidth_min_mbps) << "\n";
    out << "bandwidth_max_mbps = " << format_double(cfg.bandwidth_max_mbps) << "\n";
    out << "profile_noise = " << format_double(cfg.profile_noise) << "\n";
    out << "profile_probe_rounds = " << cfg.profile_probe_rounds << "\n";
    out << "profile_probe_deltas = " << double_list_str(cfg.profile_probe_deltas) << "\n";
    out << "round_duration = " << format_double(resolved_round_duration) << "\n";
    out << "rounds = " << cfg.rounds << "\n";
    out << "time_budget = " << format_double(cfg.time_budget) << "\n";
    out << "stop_at_accuracy = " << format_double(cfg.stop_at_accuracy) << "\n";
    out << "eval_stride = " << cfg.eval_stride << "\n";
    out << "strategy = " << to_string(cfg.strategy.kind) << "\n";
    out << "fixed_k = " << cfg.strategy.fixed_k << "\n";
    out << "fixed_delta = " << format_double(cfg.strategy.fixed_delta) << "\n";
    out << "buffer_size = " << cfg.strategy.buffer_size << "\n";
    out << "mix_alpha = " << format_double(cfg.strategy.mix_alpha) << "\n";
    out << "staleness_exponent = " << format_double(cfg.strategy.staleness_exponent) << "\n";
    out << "k_min = " << cfg.strategy.bounds.k_min << "\n";
    out << "k_max = " << cfg.strategy.bounds.k_max << "\n";
    out << "k_grid_step = " << cfg.strategy.bounds.k_grid_step << "\n";
    out << "delta_min = " << format_double(cfg.strategy.bounds.delta_min) << "\n";
    out << "delta_max = " << format_double(cfg.strategy.bounds.delta_max) << "\n";
    out << "delta_grid_points = " << cfg.strategy.bounds.delta_grid_points << "\n";
    out << "eta_l = " << format_double(cfg.eta_l) << "\n";
    out << "eta_g = " << format_double(cfg.eta_g) << "\n";
    out << "momentum = " << format_double(cfg.momentum) << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "target_accuracies = " << double_list_str(cfg.target_accuracies) << "\n";
    out << "trace = " << bool_str(cfg.emit_trace) << "\n";
    out << "seed = " << cfg.seed << "\n";
    return out.str();
}

inline std::string devices_csv_text(const RunOutput& run,
                                    const std::vector<ProfileEstimate>& estimates) {
    std::ostringstream out;
    out << "device,alpha,beta,alpha_est,beta_est,k,delta\n";
    for (std::size_t i = 0; i < run.profiles.size(); ++i) {
        out << i << ',' << format_double(run.profiles[i].alpha) << ','
            << format_double(run.profiles[i].beta) << ',' << format_double(estimates[i].alpha)
            << ',' << format_double(estimates[i].beta) << ',' << run.profiles[i].k << ','
            << format_double(run.profiles[i].delta) << "\n";
    }
    return out.str();
}

inline std::string targets_csv_text(const std::vector<MetricsRecord>& metrics,
                                    const std::vector<double>& targets) {
    std::ostringstream out;
    out << "target_accuracy,reached,round,sim_time_s,cumulative_uplink_bytes\n";
    for (double target : targets) {
        const MetricsRecord* hit = first_reaching(metrics, target);
        if (hit) {
            out << format_double(target) << ",yes," << hit->round << ','
                << format_double(hit->sim_time_s) << ',' << hit->cumulative_uplink_bytes << "\n";
        } else {
            out << format_double(target) << ",unreached,,,\n";
        }
    }
    return out.str();
}

}  // namespace detail

struct ExperimentResult {
    std::filesystem::path run_dir;
    RunOutput run;
    std::vector<ProfileEstimate> estimates;
};

/// Full single run: prepare the task, simulate, and persist metrics.csv,
/// config_resolved.txt, devices.csv, targets.csv, accuracy.svg (and
/// trace.tsv when enabled) under out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::OutputDir dir{std::filesystem::path(out_dir)};
    try {
        const PreparedTask task = prepare_task(cfg);
        std::ostringstream trace;
        RunOutput run = run_prepared(task, cfg, cfg.strategy, 0, cfg.emit_trace ? &trace : nullptr);

        std::ostringstream metrics;
        write_metrics_csv(metrics, run.sim.metrics);
        dir.write_file("metrics.csv", metrics.str());
        dir.write_file("config_resolved.txt", detail::resolved_config_text(cfg, task.round_duration));
        dir.write_file("devices.csv", detail::devices_csv_text(run, task.estimates));
        dir.write_file("targets.csv", detail::targets_csv_text(run.sim.metrics, cfg.target_accuracies));

        SvgSeries series;
        series.label = to_string(cfg.strategy.kind);
        for (const auto& r : run.sim.metrics) {
            series.x.push_back(r.sim_time_s);
            series.y.push_back(r.test_accuracy);
        }
        std::ostringstream svg;
        write_svg_chart(svg, {series}, "simulated time (s)", "test accuracy");
        dir.write_file("accuracy.svg", svg.str());
        if (cfg.emit_trace) dir.write_file("trace.tsv", trace.str());

        return ExperimentResult{dir.path(), std::move(run), task.estimates};
    } catch (...) {
        dir.cleanup();
        throw;
    }
}

struct GridCell {
    int k = 0;
    double delta = 0.0;
    std::string status;  // ok | unreached | error
    std::optional<int> rounds_to_target;
    std::optional<double> time_to_target;
    double final_accuracy = 0.0;
    std::string error;
};

struct GridResult {
    std::vector<GridCell> cells;
    double target = 0.0;
};

/// Sweep fedper over every (k, delta) combination on one shared task; cell
/// c uses engine stream 100 + c, so results do not depend on scheduling.
inline GridResult run_grid(const ExperimentConfig& base, const std::vector<int>& k_values,
                           const std::vector<double>& delta_values, const std::string& out_dir,
                           unsigned n_threads = std::thread::hardware_concurrency()) {
    if (k_values.empty() || delta_values.empty()) {
        throw ConfigError("grid: k and delta value lists must be nonempty");
    }
    if (base.target_accuracies.empty()) {
        throw ConfigError("grid: target_accuracies must name at least one target");
    }
    const double target = base.target_accuracies.front();
    const PreparedTask task = prepare_task(base);

    GridResult grid;
    grid.target = target;
    grid.cells.resize(k_values.size() * delta_values.size());

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= grid.cells.size()) return;
            GridCell& cell = grid.cells[c];
            cell.k = k_values[c / delta_values.size()];
            cell.delta = delta_values[c % delta_values.size()];
            try {
                StrategyConfig strat = base.strategy;
                strat.kind = StrategyKind::fedper;
                strat.fixed_k = cell.k;
                strat.fixed_delta = cell.delta;
                const RunOutput run = run_prepared(task, base, strat, c);
                cell.final_accuracy = run.sim.metrics.empty() ? 0.0 : run.sim.metrics.back().test_accuracy;
                if (const MetricsRecord* hit = first_reaching(run.sim.metrics, target)) {
                    cell.status = "ok";
                    cell.rounds_to_target = hit->round;
                    cell.time_to_target = hit->sim_time_s;
                } else {
                    cell.status = "unreached";
                }
            } catch (const std::exception& e) {
                cell.status = "error";
                cell.error = e.what();
            }
        }
    };

    std::vector<std::thread> pool;
    const unsigned threads = std::max(1u, n_threads);
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    detail::OutputDir dir{std::filesystem::path(out_dir)};
    std::ostringstream csv;
    csv << "k,delta,rounds_to_target,time_to_target_s,final_accuracy,status\n";
    for (const auto& cell : grid.cells) {
        csv << cell.k << ',' << format_double(cell.delta) << ',';
        if (cell.rounds_to_target) {
            csv << *cell.rounds_to_target << ',' << format_double(*cell.time_to_target);
        } else if (cell.status == "error") {
            csv << "error,error";
        } else {
            csv << "unreached,unreached";
        }
        csv << ',' << format_double(cell.final_accuracy) << ',' << cell.status << "\n";
    }
    dir.write_file("grid.csv", csv.str());
    return grid;
}

}  // namespace aflsim
