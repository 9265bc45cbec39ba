#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aflsim/errors.hpp"
#include "aflsim/rng.hpp"

namespace aflsim {

/// Labeled samples in row-major feature storage. Labels are class indices in
/// [0, n_classes).
struct Dataset {
    std::vector<double> features;  // n_samples * n_features, row-major
    std::vector<int> labels;
    std::size_t n_features = 0;
    int n_classes = 0;

    std::size_t size() const { return labels.size(); }

    const double* row(std::size_t i) const { return features.data() + i * n_features; }

    void validate() const {
        if (labels.empty()) throw ConfigError("dataset: needs at least one sample");
        if (n_features == 0) throw ConfigError("dataset: needs at least one feature");
        if (features.size() != labels.size() * n_features) {
            throw ShapeError("dataset: feature storage does not match sample count");
        }
        for (int y : labels) {
            if (y < 0 || y >= n_classes) {
                throw ConfigError("dataset: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(n_classes) + ")");
            }
        }
    }

    /// New dataset holding the given sample indices, in order.
    Dataset select(const std::vector<std::size_t>& indices) const {
        Dataset out;
        out.n_features = n_features;
        out.n_classes = n_classes;
        out.features.reserve(indices.size() * n_features);
        out.labels.reserve(indices.size());
        for (std::size_t i : indices) {
            if (i >= size()) throw ArgumentError("dataset select: index out of range");
            const double* r = row(i);
            out.features.insert(out.features.end(), r, r + n_features);
            out.labels.push_back(labels[i]);
        }
        return out;
    }
};

struct SyntheticSpec {
    std::size_t n_samples = 2000;
    std::size_t n_features = 16;
    int n_classes = 4;
    double center_box = 2.0;  // class centers drawn uniform in [-box, box]^f
    double spread = 0.6;      // per-coordinate Gaussian noise around the center
};

/// Gaussian-blob classification set: n_classes centers, samples dealt to
/// classes round-robin so counts stay balanced. Fully determined by the seed.
inline Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_samples == 0 || spec.n_features == 0 || spec.n_classes < 1) {
        throw ConfigError("synthetic dataset: samples, features and classes must be positive");
    }
    Rng rng(seed);
    std::vector<double> centers(static_cast<std::size_t>(spec.n_classes) * spec.n_features);
    for (double& c : centers) c = rng.uniform(-spec.center_box, spec.center_box);

    Dataset out;
    out.n_features = spec.n_features;
    out.n_classes = spec.n_classes;
    out.features.resize(spec.n_samples * spec.n_features);
    out.labels.resize(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(spec.n_classes));
        out.labels[i] = cls;
        const double* center = centers.data() + static_cast<std::size_t>(cls) * spec.n_features;
        for (std::size_t f = 0; f < spec.n_features; ++f) {
            out.features[i * spec.n_features + f] = center[f] + rng.normal(0.0, spec.spread);
        }
    }
    return out;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}
}  // namespace detail

/// CSV ingestion: header row required, the label column is named `label`,
/// every other column is a numeric feature. n_classes = max label + 1.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv: " + path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = detail::split_csv_line(line);
    std::ptrdiff_t label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "label") label_col = static_cast<std::ptrdiff_t>(c);
    }
    if (label_col < 0) throw ConfigError("csv: " + path + " has no column named 'label'");

    Dataset out;
    out.n_features = header.size() - 1;
    if (out.n_features == 0) throw ConfigError("csv: " + path + " has no feature columns");

    std::size_t lineno = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ConfigError("csv: " + path + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " cells, got " +
                              std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::size_t consumed = 0;
            double value = 0.0;
            try {
                value = std::stod(cells[c], &consumed);
            } catch (const std::exception&) {
                throw ConfigError("csv: " + path + ":" + std::to_string(lineno) +
                                  ": cell '" + cells[c] + "' is not numeric");
            }
            if (consumed != cells[c].size()) {
                throw ConfigError("csv: " + path + ":" + std::to_string(lineno) +
                                  ": trailing junk in cell '" + cells[c] + "'");
            }
            if (static_cast<std::ptrdiff_t>(c) == label_col) {
                const int y = static_cast<int>(value);
                if (y < 0 || static_cast<double>(y) != value) {
                    throw ConfigError("csv: " + path + ":" + std::to_string(lineno) +
                                      ": label must be a nonnegative integer");
                }
                out.labels.push_back(y);
                if (y > max_label) max_label = y;
            } else {
                out.features.push_back(value);
            }
        }
    }
    if (out.labels.empty()) throw ConfigError("csv: " + path + " has no data rows");
    out.n_classes = max_label + 1;
    out.validate();
    return out;
}

/// Deterministic shuffled split into train and held-out test sets.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                                    std::uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw ConfigError("test_fraction must be in [0, 1)");
    }
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(data.size()));
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    return {data.select(train_idx), data.select(test_idx)};
}

}  // namespace aflsim
