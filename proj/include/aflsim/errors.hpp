#pragma once

#include <stdexcept>
#include <string>

namespace aflsim {

/// Invalid user-supplied configuration (bad ranges, missing files, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument to a library call (negative step count, delta out of range, ...).
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Dimension mismatch between model, parameter vector, or dataset.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally invalid data (out-of-range sparse index, truncated blob, ...).
struct CorruptionError : std::runtime_error {
    explicit CorruptionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Query for an entity the system does not know about.
struct LookupError : std::runtime_error {
    explicit LookupError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Degenerate inputs to a profile estimation (e.g. all probe rates equal).
struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical divergence during training (non-finite model parameters).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Internal invariant violation; signals a bug, not bad input.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace aflsim
