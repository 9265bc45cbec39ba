#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace aflsim {

/// One evaluation snapshot of a run.
struct MetricsRecord {
    double sim_time_s = 0.0;
    int round = 0;
    double test_accuracy = 0.0;
    double train_loss = 0.0;
    std::uint64_t cumulative_uplink_bytes = 0;
    double mean_staleness = 0.0;
    int max_staleness = 0;
    int included_devices = 0;
};

/// Shortest decimal that round-trips a double; keeps CSV output byte-stable
/// for identical runs.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double parsed = 0.0;
    for (int prec = 1; prec <= 16; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        std::sscanf(probe, "%lf", &parsed);
        if (parsed == v) return probe;
    }
    return buf;
}

inline constexpr const char* kMetricsCsvHeader =
    "sim_time_s,round,test_accuracy,train_loss,cumulative_uplink_bytes,"
    "mean_staleness,max_staleness,included_devices";

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
    out << kMetricsCsvHeader << "\n";
    for (const auto& r : records) {
        out << format_double(r.sim_time_s) << ',' << r.round << ','
            << format_double(r.test_accuracy) << ',' << format_double(r.train_loss) << ','
            << r.cumulative_uplink_bytes << ',' << format_double(r.mean_staleness) << ','
            << r.max_staleness << ',' << r.included_devices << "\n";
    }
}

/// First record reaching the target accuracy, or nullptr.
inline const MetricsRecord* first_reaching(const std::vector<MetricsRecord>& records,
                                           double target_accuracy) {
    for (const auto& r : records) {
        if (r.test_accuracy >= target_accuracy) return &r;
    }
    return nullptr;
}

}  // namespace aflsim
