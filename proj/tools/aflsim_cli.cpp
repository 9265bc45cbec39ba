// Command-line front end: run single experiments, fedper parameter grids,
// and convergence-factor tables from flat key=value config files.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aflsim/config.hpp"
#include "aflsim/convergence.hpp"
#include "aflsim/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

struct RangeSpec {
    double lo = 0.0;
    double hi = 0.0;
    int points = 0;
};

// "lo:hi" or "lo:hi:points"
RangeSpec parse_range(const std::string& text, int default_points) {
    RangeSpec r;
    r.points = default_points;
    const auto first = text.find(':');
    if (first == std::string::npos) throw aflsim::ConfigError("range must be lo:hi[:points]");
    const auto second = text.find(':', first + 1);
    r.lo = std::stod(text.substr(0, first));
    if (second == std::string::npos) {
        r.hi = std::stod(text.substr(first + 1));
    } else {
        r.hi = std::stod(text.substr(first + 1, second - first - 1));
        r.points = std::stoi(text.substr(second + 1));
    }
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asynchronous federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/out";
    std::uint64_t seed_override = 0;
    bool seed_given = false;

    auto* run_cmd = app.add_subcommand("run", "run one experiment from a config file");
    run_cmd->add_option("config", config_path, "key=value config file")->required();
    run_cmd->add_option("--out-dir", out_dir, "output directory");
    run_cmd->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });

    std::vector<int> grid_k;
    std::vector<double> grid_delta;
    unsigned grid_threads = std::thread::hardware_concurrency();
    auto* grid_cmd = app.add_subcommand("grid", "sweep fedper over a (k, delta) grid");
    grid_cmd->add_option("config", config_path, "key=value config file")->required();
    grid_cmd->add_option("--k", grid_k, "local updating frequencies")->required();
    grid_cmd->add_option("--delta", grid_delta, "compression rates")->required();
    grid_cmd->add_option("--out-dir", out_dir, "output directory");
    grid_cmd->add_option("--threads", grid_threads, "parallel grid cells");
    grid_cmd->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });

    double pe_alpha = 0.0;
    double pe_beta = 0.0;
    double pe_round = 1.0;
    std::string pe_k_range = "10:60";
    std::string pe_delta_range = "0.001:0.5:16";
    auto* phi_cmd = app.add_subcommand("phi-eval", "print the convergence factor over a grid as CSV");
    phi_cmd->add_option("--alpha", pe_alpha, "seconds per local iteration")->required();
    phi_cmd->add_option("--beta", pe_beta, "seconds per full gradient upload")->required();
    phi_cmd->add_option("--round-duration", pe_round, "global round duration")->required();
    phi_cmd->add_option("--k-range", pe_k_range, "k as lo:hi[:step]");
    phi_cmd->add_option("--delta-range", pe_delta_range, "delta as lo:hi[:points]");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(run_cmd)) {
            aflsim::ExperimentConfig cfg = aflsim::load_config(config_path);
            if (seed_given) cfg.seed = seed_override;
            const auto result = aflsim::run_experiment(cfg, out_dir);
            std::cout << "run written to " << result.run_dir.string() << "\n";
            if (!result.run.sim.metrics.empty()) {
                const auto& last = result.run.sim.metrics.back();
                std::cout << "final: round " << last.round << ", sim time "
                          << aflsim::format_double(last.sim_time_s) << " s, accuracy "
                          << aflsim::format_double(last.test_accuracy) << "\n";
            }
            return kExitOk;
        }
        if (app.got_subcommand(grid_cmd)) {
            aflsim::ExperimentConfig cfg = aflsim::load_config(config_path);
            if (seed_given) cfg.seed = seed_override;
            const auto grid = aflsim::run_grid(cfg, grid_k, grid_delta, out_dir, grid_threads);
            std::size_t reached = 0;
            for (const auto& cell : grid.cells) {
                if (cell.rounds_to_target) ++reached;
            }
            std::cout << "grid written to " << out_dir << " (" << grid.cells.size() << " cells, "
                      << reached << " reached target " << aflsim::format_double(grid.target)
                      << ")\n";
            return kExitOk;
        }
        if (app.got_subcommand(phi_cmd)) {
            const RangeSpec kr = parse_range(pe_k_range, 0);
            const RangeSpec dr = parse_range(pe_delta_range, 16);
            aflsim::OptimizerBounds bounds;
            bounds.k_min = static_cast<int>(kr.lo);
            bounds.k_max = static_cast<int>(kr.hi);
            bounds.k_grid_step = kr.points > 0 ? kr.points : 1;
            bounds.delta_min = dr.lo;
            bounds.delta_max = dr.hi;
            bounds.delta_grid_points = dr.points;
            bounds.round_duration = pe_round;
            bounds.validate();
            std::cout << "k,delta,phi\n";
            for (int k = bounds.k_min; k <= bounds.k_max; k += bounds.k_grid_step) {
                for (double d : aflsim::delta_grid(bounds)) {
                    std::cout << k << ',' << aflsim::format_double(d) << ','
                              << aflsim::format_double(aflsim::phi(k, d, pe_alpha, pe_beta, pe_round))
                              << "\n";
                }
            }
            return kExitOk;
        }
    } catch (const aflsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitRuntimeError;
}
