#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include "aflsim/errors.hpp"
#include "aflsim/param_vector.hpp"

namespace aflsim {

/// Top-k sparsification rate: keep ceil(delta * dim) coordinates.
struct CompressionRate {
    double delta = 1.0;

    explicit CompressionRate(double d) : delta(d) {
        if (!(d > 0.0) || d > 1.0) {
            throw ArgumentError("compression rate must be in (0, 1], got " + std::to_string(d));
        }
    }
};

/// Sparse wire form of a compressed gradient: strictly increasing indices,
/// values copied bitwise from the source, and the round tag of the global
/// model the producing device trained on.
struct SparseGradient {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;
    std::uint32_t full_dim = 0;
    std::uint32_t origin_round = 0;

    std::size_t nnz() const { return indices.size(); }

    void validate() const {
        if (indices.size() != values.size()) {
            throw CorruptionError("sparse gradient: index/value count mismatch");
        }
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] >= full_dim) {
                throw CorruptionError("sparse gradient: index " + std::to_string(indices[i]) +
                                      " >= dim " + std::to_string(full_dim));
            }
            if (i > 0 && indices[i] <= indices[i - 1]) {
                throw CorruptionError("sparse gradient: indices not strictly increasing");
            }
        }
    }
};

/// Number of coordinates retained at rate delta on a d-dimensional vector.
inline std::size_t keep_count(double delta, std::size_t dim) {
    const auto m = static_cast<std::size_t>(std::ceil(delta * static_cast<double>(dim)));
    return std::min(std::max<std::size_t>(m, 1), dim);
}

/// Rate actually realized once the kept count is rounded up to an integer.
inline double realized_rate(double delta, std::size_t dim) {
    return static_cast<double>(keep_count(delta, dim)) / static_cast<double>(dim);
}

/// Keep the ceil(delta*d) entries of largest magnitude, ties broken toward
/// the lower index. Values are carried unchanged; nothing is quantized.
inline SparseGradient topk_compress(const ParamVector& g, CompressionRate rate,
                                    std::uint32_t origin_round = 0) {
    if (g.empty()) throw ArgumentError("topk_compress: empty gradient");
    const std::size_t d = g.size();
    const std::size_t m = keep_count(rate.delta, d);

    std::vector<std::uint32_t> order(d);
    std::iota(order.begin(), order.end(), 0u);
    const auto by_magnitude = [&g](std::uint32_t a, std::uint32_t b) {
        const double ma = std::fabs(g[a]);
        const double mb = std::fabs(g[b]);
        if (ma != mb) return ma > mb;
        return a < b;
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m - 1),
                     order.end(), by_magnitude);
    order.resize(m);
    std::sort(order.begin(), order.end());

    SparseGradient out;
    out.full_dim = static_cast<std::uint32_t>(d);
    out.origin_round = origin_round;
    out.indices = std::move(order);
    out.values.reserve(m);
    for (std::uint32_t idx : out.indices) out.values.push_back(g[idx]);
    return out;
}

/// Dense vector with zeros everywhere the sparse gradient has no entry.
inline ParamVector densify(const SparseGradient& s) {
    s.validate();
    ParamVector out(s.full_dim, 0.0);
    for (std::size_t i = 0; i < s.indices.size(); ++i) out[s.indices[i]] = s.values[i];
    return out;
}

/// Bytes on the wire for the entry payload: nnz * (index + value width).
inline std::uint64_t wire_size_bytes(const SparseGradient& s, std::size_t index_bytes = 4,
                                     std::size_t value_bytes = 4) {
    if (index_bytes == 0 || value_bytes == 0) {
        throw ArgumentError("wire_size_bytes: byte widths must be positive");
    }
    return static_cast<std::uint64_t>(s.nnz()) * (index_bytes + value_bytes);
}

namespace wire {

// Trace-file blob layout, little-endian:
//   u32 full_dim, u32 count, u32 origin_round,
//   count x u32 indices, count x f32 values.
// Values are narrowed to f32 on the wire; wire_size_bytes' defaults (4, 4)
// describe this payload.

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<std::uint8_t> encode(const SparseGradient& s) {
    s.validate();
    std::vector<std::uint8_t> out;
    out.reserve(12 + s.nnz() * 8);
    put_u32(out, s.full_dim);
    put_u32(out, static_cast<std::uint32_t>(s.nnz()));
    put_u32(out, s.origin_round);
    for (std::uint32_t idx : s.indices) put_u32(out, idx);
    for (double v : s.values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        put_u32(out, bits);
    }
    return out;
}

inline SparseGradient decode(const std::vector<std::uint8_t>& blob) {
    if (blob.size() < 12) throw CorruptionError("sparse blob: truncated header");
    SparseGradient s;
    s.full_dim = get_u32(blob.data());
    const std::uint32_t count = get_u32(blob.data() + 4);
    s.origin_round = get_u32(blob.data() + 8);
    if (blob.size() != 12 + static_cast<std::size_t>(count) * 8) {
        throw CorruptionError("sparse blob: size does not match entry count");
    }
    s.indices.resize(count);
    s.values.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        s.indices[i] = get_u32(blob.data() + 12 + static_cast<std::size_t>(i) * 4);
    }
    const std::size_t values_at = 12 + static_cast<std::size_t>(count) * 4;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(blob.data() + values_at + static_cast<std::size_t>(i) * 4);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        s.values[i] = static_cast<double>(f);
    }
    s.validate();
    return s;
}

}  // namespace wire

}  // namespace aflsim
