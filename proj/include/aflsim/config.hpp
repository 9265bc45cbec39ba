#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aflsim/errors.hpp"
#include "aflsim/model.hpp"
#include "aflsim/strategies.hpp"

namespace aflsim {

enum class PartitionKind { iid, dirichlet };

/// Everything a run needs, parsed from a flat key=value file. One key per
/// line, '#' starts a comment, keys are documented in the README. A config
/// plus its seed fully determines the run output.
struct ExperimentConfig {
    // dataset
    std::string dataset = "synthetic";  // synthetic | csv
    std::string csv_path;
    double test_fraction = 0.2;
    std::size_t synthetic_samples = 2000;
    std::size_t synthetic_features = 16;
    int synthetic_classes = 4;
    double synthetic_spread = 0.6;
    double synthetic_center_box = 2.0;

    // model
    ModelSpec model;

    // federation
    std::size_t devices = 10;
    PartitionKind partition = PartitionKind::iid;
    double concentration = 1.0;

    // heterogeneity (ground truth draw)
    double alpha_base = 1e-3;
    double alpha_range_multiplier = 4.0;
    double bandwidth_min_mbps = 0.25;
    double bandwidth_max_mbps = 2.0;

    // profiling phase
    double profile_noise = 0.0;
    int profile_probe_rounds = 5;
    std::vector<double> profile_probe_deltas = {0.1, 0.5};

    // timing
    bool round_duration_auto = true;
    double round_duration = 0.0;  // resolved value when not auto
    int rounds = 200;
    double time_budget = 0.0;       // simulated-seconds cap; 0 disables
    double stop_at_accuracy = 0.0;  // end runs at the first evaluation >= this; 0 disables
    int eval_stride = 1;

    // strategy
    StrategyConfig strategy;
    bool fixed_delta_given = false;  // fedbuff/fedasync default to delta=1

    // training
    double eta_l = 0.05;
    double eta_g = 1.0;
    double momentum = 0.0;
    std::size_t batch_size = 32;

    // outputs
    std::vector<double> target_accuracies;
    bool emit_trace = false;
    std::uint64_t seed = 1;

    std::map<std::string, std::string> raw;  // parsed keys, for the echo
};

namespace detail {

struct ConfigParser {
    std::vector<std::string> violations;

    void complain(const std::string& msg) { violations.push_back(msg); }

    static std::string trim(const std::string& s) {
        std::size_t a = 0;
        std::size_t b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    bool parse_double(const std::string& key, const std::string& value, double& out) {
        try {
            std::size_t used = 0;
            out = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing junk");
            return true;
        } catch (const std::exception&) {
            complain(key + ": '" + value + "' is not a number");
            return false;
        }
    }

    bool parse_int(const std::string& key, const std::string& value, long long& out) {
        try {
            std::size_t used = 0;
            out = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing junk");
            return true;
        } catch (const std::exception&) {
            complain(key + ": '" + value + "' is not an integer");
            return false;
        }
    }

    bool parse_bool(const std::string& key, const std::string& value, bool& out) {
        if (value == "true" || value == "1") {
            out = true;
            return true;
        }
        if (value == "false" || value == "0") {
            out = false;
            return true;
        }
        complain(key + ": '" + value + "' is not a boolean (true/false)");
        return false;
    }

    std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
        std::vector<double> out;
        std::stringstream ss(value);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell = trim(cell);
            if (cell.empty()) continue;
            double v = 0.0;
            if (parse_double(key, cell, v)) out.push_back(v);
        }
        return out;
    }
};

}  // namespace detail

/// Parse a key=value config body. Collects every parse and semantic
/// violation (not just the first) and throws a single ConfigError listing
/// them all. `origin` names the source in messages.
inline ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    cfg.model.layer_sizes = {16, 32, 4};
    detail::ConfigParser p;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::ConfigParser::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            p.complain(origin + ":" + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = detail::ConfigParser::trim(line.substr(0, eq));
        const std::string value = detail::ConfigParser::trim(line.substr(eq + 1));
        if (key.empty()) {
            p.complain(origin + ":" + std::to_string(lineno) + ": empty key");
            continue;
        }
        if (cfg.raw.count(key)) {
            p.complain(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            continue;
        }
        cfg.raw[key] = value;

        long long i = 0;
        double d = 0.0;
        if (key == "dataset") {
            if (value != "synthetic" && value != "csv") {
                p.complain("dataset: must be 'synthetic' or 'csv', got '" + value + "'");
            } else {
                cfg.dataset = value;
            }
        } else if (key == "csv_path") {
            cfg.csv_path = value;
        } else if (key == "test_fraction") {
            if (p.parse_double(key, value, d)) cfg.test_fraction = d;
        } else if (key == "synthetic_samples") {
            if (p.parse_int(key, value, i)) cfg.synthetic_samples = static_cast<std::size_t>(i);
        } else if (key == "synthetic_features") {
            if (p.parse_int(key, value, i)) cfg.synthetic_features = static_cast<std::size_t>(i);
        } else if (key == "synthetic_classes") {
            if (p.parse_int(key, value, i)) cfg.synthetic_classes = static_cast<int>(i);
        } else if (key == "synthetic_spread") {
            if (p.parse_double(key, value, d)) cfg.synthetic_spread = d;
        } else if (key == "synthetic_center_box") {
            if (p.parse_double(key, value, d)) cfg.synthetic_center_box = d;
        } else if (key == "layers") {
            cfg.model.layer_sizes.clear();
            for (double v : p.parse_double_list(key, value)) {
                if (v < 1 || v != static_cast<double>(static_cast<long long>(v))) {
                    p.complain("layers: sizes must be positive integers");
                } else {
                    cfg.model.layer_sizes.push_back(static_cast<std::size_t>(v));
                }
            }
        } else if (key == "activation") {
            if (value == "relu") cfg.model.activation = Activation::relu;
            else if (value == "tanh") cfg.model.activation = Activation::tanh;
            else if (value == "none") cfg.model.activation = Activation::none;
            else p.complain("activation: must be relu|tanh|none, got '" + value + "'");
        } else if (key == "loss") {
            if (value == "softmax_cross_entropy") cfg.model.loss = Loss::softmax_cross_entropy;
            else if (value == "mse") cfg.model.loss = Loss::mse;
            else p.complain("loss: must be softmax_cross_entropy|mse, got '" + value + "'");
        } else if (key == "bias") {
            p.parse_bool(key, value, cfg.model.bias);
        } else if (key == "devices") {
            if (p.parse_int(key, value, i)) cfg.devices = static_cast<std::size_t>(i);
        } else if (key == "partition") {
            if (value == "iid") cfg.partition = PartitionKind::iid;
            else if (value == "dirichlet") cfg.partition = PartitionKind::dirichlet;
            else p.complain("partition: must be iid|dirichlet, got '" + value + "'");
        } else if (key == "concentration") {
            if (p.parse_double(key, value, d)) cfg.concentration = d;
        } else if (key == "alpha_base") {
            if (p.parse_double(key, value, d)) cfg.alpha_base = d;
        } else if (key == "alpha_range_multiplier") {
            if (p.parse_double(key, value, d)) cfg.alpha_range_multiplier = d;
        } else if (key == "bandwidth_min_mbps") {
            if (p.parse_double(key, value, d)) cfg.bandwidth_min_mbps = d;
        } else if (key == "bandwidth_max_mbps") {
            if (p.parse_double(key, value, d)) cfg.bandwidth_max_mbps = d;
        } else if (key == "profile_noise") {
            if (p.parse_double(key, value, d)) cfg.profile_noise = d;
        } else if (key == "profile_probe_rounds") {
            if (p.parse_int(key, value, i)) cfg.profile_probe_rounds = static_cast<int>(i);
        } else if (key == "profile_probe_deltas") {
            cfg.profile_probe_deltas = p.parse_double_list(key, value);
        } else if (key == "round_duration") {
            if (value == "auto") {
                cfg.round_duration_auto = true;
            } else if (p.parse_double(key, value, d)) {
                cfg.round_duration_auto = false;
                cfg.round_duration = d;
            }
        } else if (key == "rounds") {
            if (p.parse_int(key, value, i)) cfg.rounds = static_cast<int>(i);
        } else if (key == "time_budget") {
            if (p.parse_double(key, value, d)) cfg.time_budget = d;
        } else if (key == "stop_at_accuracy") {
            if (p.parse_double(key, value, d)) cfg.stop_at_accuracy = d;
        } else if (key == "eval_stride") {
            if (p.parse_int(key, value, i)) cfg.eval_stride = static_cast<int>(i);
        } else if (key == "strategy") {
            if (value == "fedluck") cfg.strategy.kind = StrategyKind::fedluck;
            else if (value == "fedper") cfg.strategy.kind = StrategyKind::fedper;
            else if (value == "fedbuff") cfg.strategy.kind = StrategyKind::fedbuff;
            else if (value == "fedasync") cfg.strategy.kind = StrategyKind::fedasync;
            else if (value == "fedavg_topk") cfg.strategy.kind = StrategyKind::fedavg_topk;
            else p.complain("strategy: must be fedluck|fedper|fedbuff|fedasync|fedavg_topk");
        } else if (key == "fixed_k") {
            if (p.parse_int(key, value, i)) cfg.strategy.fixed_k = static_cast<int>(i);
        } else if (key == "fixed_delta") {
            if (p.parse_double(key, value, d)) {
                cfg.strategy.fixed_delta = d;
                cfg.fixed_delta_given = true;
            }
        } else if (key == "buffer_size") {
            if (p.parse_int(key, value, i)) cfg.strategy.buffer_size = static_cast<int>(i);
        } else if (key == "mix_alpha") {
            if (p.parse_double(key, value, d)) cfg.strategy.mix_alpha = d;
        } else if (key == "staleness_exponent") {
            if (p.parse_double(key, value, d)) cfg.strategy.staleness_exponent = d;
        } else if (key == "k_min") {
            if (p.parse_int(key, value, i)) cfg.strategy.bounds.k_min = static_cast<int>(i);
        } else if (key == "k_max") {
            if (p.parse_int(key, value, i)) cfg.strategy.bounds.k_max = static_cast<int>(i);
        } else if (key == "k_grid_step") {
            if (p.parse_int(key, value, i)) cfg.strategy.bounds.k_grid_step = static_cast<int>(i);
        } else if (key == "delta_min") {
            if (p.parse_double(key, value, d)) cfg.strategy.bounds.delta_min = d;
        } else if (key == "delta_max") {
            if (p.parse_double(key, value, d)) cfg.strategy.bounds.delta_max = d;
        } else if (key == "delta_grid_points") {
            if (p.parse_int(key, value, i)) cfg.strategy.bounds.delta_grid_points = static_cast<int>(i);
        } else if (key == "eta_l") {
            if (p.parse_double(key, value, d)) cfg.eta_l = d;
        } else if (key == "eta_g") {
            if (p.parse_double(key, value, d)) cfg.eta_g = d;
        } else if (key == "momentum") {
            if (p.parse_double(key, value, d)) cfg.momentum = d;
        } else if (key == "batch_size") {
            if (p.parse_int(key, value, i)) cfg.batch_size = static_cast<std::size_t>(i);
        } else if (key == "target_accuracies") {
            cfg.target_accuracies = p.parse_double_list(key, value);
        } else if (key == "trace") {
            p.parse_bool(key, value, cfg.emit_trace);
        } else if (key == "seed") {
            if (p.parse_int(key, value, i)) cfg.seed = static_cast<std::uint64_t>(i);
        } else {
            p.complain(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }

    // fedbuff and fedasync transmit uncompressed unless told otherwise
    if (!cfg.fixed_delta_given && (cfg.strategy.kind == StrategyKind::fedbuff ||
                                   cfg.strategy.kind == StrategyKind::fedasync)) {
        cfg.strategy.fixed_delta = 1.0;
    }

    // semantic checks; gather everything before failing
    if (cfg.dataset == "csv" && cfg.csv_path.empty()) p.complain("csv_path: required when dataset=csv");
    if (cfg.dataset == "csv" && !cfg.csv_path.empty()) {
        std::ifstream probe(cfg.csv_path);
        if (!probe) p.complain("csv_path: cannot open '" + cfg.csv_path + "'");
    }
    if (cfg.dataset == "synthetic") {
        if (cfg.synthetic_samples < 2) p.complain("synthetic_samples: must be >= 2");
        if (cfg.synthetic_features == 0) p.complain("synthetic_features: must be >= 1");
        if (cfg.synthetic_classes < 1) p.complain("synthetic_classes: must be >= 1");
        if (cfg.synthetic_spread <= 0.0) p.complain("synthetic_spread: must be > 0");
    }
    if (!(cfg.test_fraction >= 0.0) || cfg.test_fraction >= 1.0) {
        p.complain("test_fraction: must be in [0, 1)");
    }
    if (cfg.model.layer_sizes.size() < 2) p.complain("layers: need at least input and output layer");
    if (cfg.devices < 1) p.complain("devices: must be >= 1");
    if (cfg.partition == PartitionKind::dirichlet && cfg.concentration <= 0.0) {
        p.complain("concentration: must be > 0");
    }
    if (cfg.alpha_base <= 0.0) p.complain("alpha_base: must be > 0");
    if (cfg.alpha_range_multiplier < 1.0) p.complain("alpha_range_multiplier: must be >= 1");
    if (cfg.bandwidth_min_mbps <= 0.0) p.complain("bandwidth_min_mbps: must be > 0");
    if (cfg.bandwidth_max_mbps < cfg.bandwidth_min_mbps) {
        p.complain("bandwidth_max_mbps: must be >= bandwidth_min_mbps");
    }
    if (cfg.profile_noise < 0.0) p.complain("profile_noise: must be >= 0");
    if (cfg.profile_probe_rounds < 1) p.complain("profile_probe_rounds: must be >= 1");
    if (cfg.profile_probe_deltas.size() < 2) {
        p.complain("profile_probe_deltas: need at least 2 probe rates");
    }
    for (double pd : cfg.profile_probe_deltas) {
        if (!(pd > 0.0) || pd > 1.0) {
            p.complain("profile_probe_deltas: rates must be in (0, 1]");
            break;
        }
    }
    if (!cfg.round_duration_auto && cfg.round_duration <= 0.0) {
        p.complain("round_duration: must be > 0 or 'auto'");
    }
    if (cfg.rounds < 1) p.complain("rounds: must be >= 1");
    if (cfg.time_budget < 0.0) p.complain("time_budget: must be >= 0 (0 disables)");
    if (cfg.stop_at_accuracy < 0.0 || cfg.stop_at_accuracy > 1.0) {
        p.complain("stop_at_accuracy: must be in [0, 1]");
    }
    if (cfg.eval_stride < 1) p.complain("eval_stride: must be >= 1");
    if (cfg.eta_l <= 0.0) p.complain("eta_l: must be > 0");
    if (cfg.eta_g <= 0.0) p.complain("eta_g: must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) p.complain("momentum: must be in [0, 1)");
    for (double t : cfg.target_accuracies) {
        if (!(t > 0.0) || t > 1.0) {
            p.complain("target_accuracies: targets must be in (0, 1]");
            break;
        }
    }
    try {
        cfg.strategy.validate();
    } catch (const ConfigError& e) {
        p.complain(e.what());
    }
    // bounds feed the auto round-duration rule for every strategy, so they
    // must be sane even outside fedluck
    if (cfg.strategy.kind != StrategyKind::fedluck) {
        try {
            cfg.strategy.bounds.validate();
        } catch (const ConfigError& e) {
            p.complain(e.what());
        }
    }

    if (!p.violations.empty()) {
        std::string msg = "invalid config (" + origin + "):";
        for (const auto& v : p.violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, path);
}

}  // namespace aflsim
