#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "aflsim/errors.hpp"

namespace aflsim {

/// Flat dense vector of model parameters or gradients. The one numeric
/// currency passed between the model, the compressor and the server.
using ParamVector = std::vector<double>;

inline bool all_finite(const ParamVector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline void check_same_dim(const ParamVector& a, const ParamVector& b, const char* where) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(where) + ": dimension mismatch (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
}

/// y += a * x
inline void axpy(double a, const ParamVector& x, ParamVector& y) {
    check_same_dim(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double squared_norm(const ParamVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double norm(const ParamVector& v) { return std::sqrt(squared_norm(v)); }

inline ParamVector subtract(const ParamVector& a, const ParamVector& b) {
    check_same_dim(a, b, "subtract");
    ParamVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

}  // namespace aflsim
