#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "aflsim/experiment.hpp"
#include "aflsim/strategies.hpp"

using namespace aflsim;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ExperimentConfig small_config() {
    std::istringstream in(
        "strategy = fedper\n"
        "fixed_k = 5\n"
        "fixed_delta = 0.2\n"
        "synthetic_samples = 240\n"
        "synthetic_features = 4\n"
        "synthetic_classes = 3\n"
        "layers = 4,8,3\n"
        "devices = 4\n"
        "rounds = 12\n"
        "alpha_base = 0.001\n"
        "eta_l = 0.1\n"
        "batch_size = 8\n"
        "target_accuracies = 0.5,0.99\n"
        "seed = 21\n");
    return parse_config(in, "inline");
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "aflsim_tests" / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("a run writes the full artifact set") {
    const auto dir = fresh_dir("artifacts");
    const ExperimentResult result = run_experiment(small_config(), dir.string());
    REQUIRE(std::filesystem::exists(dir / "metrics.csv"));
    REQUIRE(std::filesystem::exists(dir / "config_resolved.txt"));
    REQUIRE(std::filesystem::exists(dir / "devices.csv"));
    REQUIRE(std::filesystem::exists(dir / "targets.csv"));
    REQUIRE(std::filesystem::exists(dir / "accuracy.svg"));
    REQUIRE(!result.run.sim.metrics.empty());

    const std::string metrics = read_file(dir / "metrics.csv");
    REQUIRE(metrics.rfind("sim_time_s,round,test_accuracy,train_loss,cumulative_uplink_bytes,"
                          "mean_staleness,max_staleness,included_devices\n",
                          0) == 0);

    const std::string svg = read_file(dir / "accuracy.svg");
    REQUIRE(svg.rfind("<svg", 0) == 0);
    REQUIRE(svg.find("polyline") != std::string::npos);

    // resolved config re-parses cleanly and pins the auto round duration
    const std::string resolved = read_file(dir / "config_resolved.txt");
    std::istringstream in(resolved);
    const ExperimentConfig echo = parse_config(in, "echo");
    REQUIRE(!echo.round_duration_auto);
    REQUIRE(echo.round_duration > 0.0);
    REQUIRE(echo.seed == 21);
}

TEST_CASE("the same config and seed reproduce metrics.csv byte for byte") {
    const auto dir_a = fresh_dir("repro_a");
    const auto dir_b = fresh_dir("repro_b");
    run_experiment(small_config(), dir_a.string());
    run_experiment(small_config(), dir_b.string());
    REQUIRE(read_file(dir_a / "metrics.csv") == read_file(dir_b / "metrics.csv"));
    REQUIRE(read_file(dir_a / "devices.csv") == read_file(dir_b / "devices.csv"));
}

TEST_CASE("re-running from the resolved echo reproduces the run") {
    const auto dir_a = fresh_dir("echo_a");
    run_experiment(small_config(), dir_a.string());
    std::istringstream echo(read_file(dir_a / "config_resolved.txt"));
    const ExperimentConfig cfg = parse_config(echo, "echo");
    const auto dir_b = fresh_dir("echo_b");
    run_experiment(cfg, dir_b.string());
    REQUIRE(read_file(dir_a / "metrics.csv") == read_file(dir_b / "metrics.csv"));
}

TEST_CASE("time to target equals a post-hoc scan of the metrics") {
    const auto dir = fresh_dir("targets");
    const ExperimentResult result = run_experiment(small_config(), dir.string());

    const auto& metrics = result.run.sim.metrics;
    for (double target : {0.5, 0.99}) {
        const MetricsRecord* oracle = nullptr;
        for (const auto& r : metrics) {
            if (r.test_accuracy >= target) {
                oracle = &r;
                break;
            }
        }
        const std::string targets = read_file(dir / "targets.csv");
        std::istringstream in(targets);
        std::string line;
        std::getline(in, line);  // header
        bool found = false;
        while (std::getline(in, line)) {
            if (line.rfind(format_double(target) + ",", 0) != 0) continue;
            found = true;
            if (oracle) {
                REQUIRE(line.find(",yes,") != std::string::npos);
                REQUIRE(line.find("," + format_double(oracle->sim_time_s) + ",") !=
                        std::string::npos);
            } else {
                REQUIRE(line.find(",unreached,") != std::string::npos);
            }
        }
        REQUIRE(found);
    }
}

TEST_CASE("an unreachable target is recorded without failing the run") {
    ExperimentConfig cfg = small_config();
    cfg.target_accuracies = {0.999};
    cfg.rounds = 3;
    const auto dir = fresh_dir("unreached");
    REQUIRE_NOTHROW(run_experiment(cfg, dir.string()));
    REQUIRE(read_file(dir / "targets.csv").find("unreached") != std::string::npos);
}

TEST_CASE("grid emits one row per cell and matches single runs") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 10;
    cfg.target_accuracies = {0.5};
    const auto dir = fresh_dir("grid");
    const GridResult grid = run_grid(cfg, {2, 5}, {0.1, 0.5, 1.0}, dir.string(), 2);
    REQUIRE(grid.cells.size() == 6);

    const std::string csv = read_file(dir / "grid.csv");
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    REQUIRE(lines == 7);  // header + 6 cells

    // cell 0 must agree with a plain run at the same parameters: a single
    // run is cell 0 by construction
    ExperimentConfig single = cfg;
    single.strategy.kind = StrategyKind::fedper;
    single.strategy.fixed_k = grid.cells[0].k;
    single.strategy.fixed_delta = grid.cells[0].delta;
    const auto run_dir = fresh_dir("grid_single");
    const ExperimentResult single_run = run_experiment(single, run_dir.string());
    const MetricsRecord* hit = first_reaching(single_run.run.sim.metrics, 0.5);
    if (grid.cells[0].rounds_to_target) {
        REQUIRE(hit != nullptr);
        REQUIRE(*grid.cells[0].rounds_to_target == hit->round);
        REQUIRE(*grid.cells[0].time_to_target == hit->sim_time_s);
    } else {
        REQUIRE(hit == nullptr);
    }
}

TEST_CASE("the cell at the optimizer's chosen point is near the grid optimum") {
    // homogeneous devices, so the optimizer picks one (k, delta) for all
    std::istringstream in(
        "strategy = fedluck\n"
        "synthetic_samples = 1600\n"
        "synthetic_features = 32\n"
        "synthetic_classes = 4\n"
        "synthetic_spread = 1.1\n"
        "synthetic_center_box = 1.0\n"
        "test_fraction = 0.25\n"
        "layers = 32,64,4\n"
        "devices = 10\n"
        "alpha_base = 0.0002\n"
        "alpha_range_multiplier = 1\n"
        "bandwidth_min_mbps = 0.5\n"
        "bandwidth_max_mbps = 0.5\n"
        "rounds = 900\n"
        "eta_l = 0.05\n"
        "eta_g = 0.4\n"
        "batch_size = 8\n"
        "k_min = 10\n"
        "k_max = 60\n"
        "delta_min = 0.001\n"
        "delta_max = 0.5\n"
        "target_accuracies = 0.9\n"
        "stop_at_accuracy = 0.9\n"
        "seed = 5\n");
    const ExperimentConfig cfg = parse_config(in, "inline");
    const PreparedTask task = prepare_task(cfg);
    const StrategyPlan plan = make_strategy([&] {
        StrategyConfig s = cfg.strategy;
        s.bounds = task.bounds;
        return s;
    }(), task.estimates, task.model.param_count());
    const int chosen_k = plan.device_params[0].k;
    const double chosen_delta = plan.device_params[0].delta;
    for (const auto& p : plan.device_params) {
        REQUIRE(p.k == chosen_k);
        REQUIRE(p.delta == chosen_delta);
    }

    std::vector<int> ks = {10, 60};
    if (chosen_k != 10 && chosen_k != 60) ks.insert(ks.begin() + 1, chosen_k);
    std::vector<double> deltas = {0.005, chosen_delta, 0.3};
    const auto dir = fresh_dir("grid_chosen");
    const GridResult grid = run_grid(cfg, ks, deltas, dir.string(), 2);

    double best = 1e300;
    double chosen_cell = -1.0;
    for (const auto& cell : grid.cells) {
        if (cell.time_to_target) best = std::min(best, *cell.time_to_target);
        if (cell.k == chosen_k && cell.delta == chosen_delta) {
            REQUIRE(cell.time_to_target.has_value());  // the chosen point must reach the target
            chosen_cell = *cell.time_to_target;
        }
    }
    REQUIRE(chosen_cell >= 0.0);
    REQUIRE(chosen_cell <= 1.1 * best);
}

TEST_CASE("grid results do not depend on the thread count") {
    ExperimentConfig cfg = small_config();
    cfg.rounds = 8;
    cfg.target_accuracies = {0.5};
    const auto dir_a = fresh_dir("grid_t1");
    const auto dir_b = fresh_dir("grid_t4");
    run_grid(cfg, {2, 5}, {0.2, 1.0}, dir_a.string(), 1);
    run_grid(cfg, {2, 5}, {0.2, 1.0}, dir_b.string(), 4);
    REQUIRE(read_file(dir_a / "grid.csv") == read_file(dir_b / "grid.csv"));
}

TEST_CASE("grid requires nonempty values and a target") {
    ExperimentConfig cfg = small_config();
    const auto dir = fresh_dir("grid_bad");
    REQUIRE_THROWS_AS(run_grid(cfg, {}, {0.5}, dir.string()), ConfigError);
    cfg.target_accuracies.clear();
    REQUIRE_THROWS_AS(run_grid(cfg, {2}, {0.5}, dir.string()), ConfigError);
}

TEST_CASE("trace output is written when enabled") {
    ExperimentConfig cfg = small_config();
    cfg.emit_trace = true;
    cfg.rounds = 4;
    const auto dir = fresh_dir("trace");
    run_experiment(cfg, dir.string());
    const std::string trace = read_file(dir / "trace.tsv");
    REQUIRE(trace.find("arrival") != std::string::npos);
    REQUIRE(trace.find("boundary") != std::string::npos);
}
