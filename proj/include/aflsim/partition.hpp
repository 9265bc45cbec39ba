#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "aflsim/dataset.hpp"
#include "aflsim/errors.hpp"
#include "aflsim/rng.hpp"

namespace aflsim {

/// Disjoint assignment of sample indices to devices; union covers the set.
struct PartitionPlan {
    std::vector<std::vector<std::size_t>> assignments;
    double concentration = 0.0;  // 0 marks an IID split

    void validate(std::size_t n_samples) const {
        std::vector<bool> seen(n_samples, false);
        std::size_t total = 0;
        for (const auto& device : assignments) {
            if (device.empty()) throw InternalError("partition: empty device after repair");
            for (std::size_t idx : device) {
                if (idx >= n_samples || seen[idx]) {
                    throw InternalError("partition: indices not a disjoint cover");
                }
                seen[idx] = true;
            }
            total += device.size();
        }
        if (total != n_samples) throw InternalError("partition: union does not cover the set");
    }
};

namespace detail {

/// Move one sample from the currently largest device to each empty one.
/// Degenerate Dirichlet draws can strand a device with nothing.
inline void repair_empty_devices(std::vector<std::vector<std::size_t>>& assignments) {
    for (auto& device : assignments) {
        if (!device.empty()) continue;
        auto largest = std::max_element(
            assignments.begin(), assignments.end(),
            [](const auto& a, const auto& b) { return a.size() < b.size(); });
        if (largest->size() <= 1) throw ConfigError("partition: not enough samples to fill every device");
        device.push_back(largest->back());
        largest->pop_back();
    }
}

}  // namespace detail

/// Even split of a seeded shuffle; remainders go to the lowest device ids.
inline PartitionPlan iid_partition(const Dataset& data, std::size_t n_devices, std::uint64_t seed) {
    if (n_devices == 0) throw ConfigError("partition: n_devices must be >= 1");
    if (n_devices > data.size()) {
        throw ConfigError("partition: more devices (" + std::to_string(n_devices) +
                          ") than samples (" + std::to_string(data.size()) + ")");
    }
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    PartitionPlan plan;
    plan.assignments.resize(n_devices);
    const std::size_t base = data.size() / n_devices;
    const std::size_t extra = data.size() % n_devices;
    std::size_t pos = 0;
    for (std::size_t d = 0; d < n_devices; ++d) {
        const std::size_t take = base + (d < extra ? 1 : 0);
        plan.assignments[d].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                   order.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += take;
    }
    plan.validate(data.size());
    return plan;
}

/// Non-IID split: per class, device proportions are drawn from
/// Dirichlet(concentration) as normalized Gamma draws, the class's samples
/// are shuffled, and contiguous slices are cut at round(cumulative * count).
/// Draw order: for each class (ascending), n_devices Gamma draws, then the
/// shuffle of that class's indices.
inline PartitionPlan dirichlet_partition(const Dataset& data, std::size_t n_devices,
                                         double concentration, std::uint64_t seed) {
    if (n_devices == 0) throw ConfigError("partition: n_devices must be >= 1");
    if (concentration <= 0.0) throw ConfigError("partition: concentration must be > 0");
    if (n_devices > data.size()) {
        throw ConfigError("partition: more devices (" + std::to_string(n_devices) +
                          ") than samples (" + std::to_string(data.size()) + ")");
    }

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.n_classes));
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }

    Rng rng(seed);
    PartitionPlan plan;
    plan.concentration = concentration;
    plan.assignments.resize(n_devices);

    std::vector<double> weights(n_devices);
    for (auto& class_indices : by_class) {
        double total = 0.0;
        for (std::size_t d = 0; d < n_devices; ++d) {
            weights[d] = rng.gamma(concentration);
            total += weights[d];
        }
        rng.shuffle(class_indices);

        const double n = static_cast<double>(class_indices.size());
        double cumulative = 0.0;
        std::size_t start = 0;
        for (std::size_t d = 0; d < n_devices; ++d) {
            cumulative += weights[d] / total;
            const std::size_t end =
                (d + 1 == n_devices)
                    ? class_indices.size()
                    : std::min(class_indices.size(),
                               static_cast<std::size_t>(std::llround(cumulative * n)));
            for (std::size_t i = start; i < end; ++i) {
                plan.assignments[d].push_back(class_indices[i]);
            }
            start = std::max(start, end);
        }
    }

    detail::repair_empty_devices(plan.assignments);
    plan.validate(data.size());
    return plan;
}

}  // namespace aflsim
