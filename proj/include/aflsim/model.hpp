#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aflsim/dataset.hpp"
#include "aflsim/errors.hpp"
#include "aflsim/param_vector.hpp"
#include "aflsim/rng.hpp"

namespace aflsim {

enum class Activation { relu, tanh, none };
enum class Loss { softmax_cross_entropy, mse };

/// Dense feed-forward network: affine layers with an elementwise activation
/// between them and a linear head. Parameters pack layer by layer, each
/// weight matrix row-major (out x in) followed by its bias vector.
struct ModelSpec {
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::relu;
    Loss loss = Loss::softmax_cross_entropy;
    bool bias = true;

    void validate() const {
        if (layer_sizes.size() < 2) {
            throw ConfigError("model: needs at least input and output layer");
        }
        for (std::size_t n : layer_sizes) {
            if (n == 0) throw ConfigError("model: layer sizes must be positive");
        }
    }

    std::size_t param_count() const {
        validate();
        std::size_t total = 0;
        for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
            total += layer_sizes[l] * layer_sizes[l - 1];
            if (bias) total += layer_sizes[l];
        }
        return total;
    }

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
};

/// Initial weights, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer
/// (biases use the same bound as their layer). Draw order is the packing
/// order, so a fixed (spec, seed) pair gives bitwise-identical vectors.
inline ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ParamVector w;
    w.reserve(spec.param_count());
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l - 1]));
        const std::size_t count =
            spec.layer_sizes[l] * spec.layer_sizes[l - 1] + (spec.bias ? spec.layer_sizes[l] : 0);
        for (std::size_t i = 0; i < count; ++i) w.push_back(rng.uniform(-bound, bound));
    }
    return w;
}

namespace detail {

inline double activate(double z, Activation a) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::none: return z;
    }
    return z;
}

/// Derivative expressed through the activation output.
inline double activate_grad(double out, Activation a) {
    switch (a) {
        case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - out * out;
        case Activation::none: return 1.0;
    }
    return 1.0;
}

/// Per-layer activations for one sample; activations[0] is the input row.
inline void forward(const ParamVector& w, const ModelSpec& spec, const double* x,
                    std::vector<std::vector<double>>& activations) {
    const std::size_t n_layers = spec.layer_sizes.size();
    activations.resize(n_layers);
    activations[0].assign(x, x + spec.layer_sizes[0]);
    std::size_t offset = 0;
    for (std::size_t l = 1; l < n_layers; ++l) {
        const std::size_t n_out = spec.layer_sizes[l];
        const std::size_t n_in = spec.layer_sizes[l - 1];
        const bool last = (l + 1 == n_layers);
        activations[l].assign(n_out, 0.0);
        const double* W = w.data() + offset;
        const double* b = spec.bias ? w.data() + offset + n_out * n_in : nullptr;
        const std::vector<double>& in = activations[l - 1];
        for (std::size_t o = 0; o < n_out; ++o) {
            double z = b ? b[o] : 0.0;
            const double* row = W + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) z += row[i] * in[i];
            activations[l][o] = last ? z : activate(z, spec.activation);
        }
        offset += n_out * n_in + (spec.bias ? n_out : 0);
    }
}

/// Loss of one sample and the gradient w.r.t. the linear head output.
/// mse with a single output regresses on the raw numeric label; with more
/// outputs the target is the one-hot vector of the label.
inline double loss_and_head_grad(const std::vector<double>& head, int label, Loss loss,
                                 std::vector<double>& dhead) {
    const std::size_t m = head.size();
    dhead.assign(m, 0.0);
    if (loss == Loss::mse) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double target = (m == 1) ? static_cast<double>(label)
                                           : (static_cast<std::size_t>(label) == j ? 1.0 : 0.0);
            const double diff = head[j] - target;
            total += 0.5 * diff * diff;
            dhead[j] = diff;
        }
        return total;
    }
    // softmax cross-entropy, log-sum-exp stabilized
    const double zmax = *std::max_element(head.begin(), head.end());
    double sum = 0.0;
    for (double z : head) sum += std::exp(z - zmax);
    const double log_sum = std::log(sum) + zmax;
    for (std::size_t j = 0; j < m; ++j) {
        dhead[j] = std::exp(head[j] - log_sum);
    }
    const double loss_value = log_sum - head[static_cast<std::size_t>(label)];
    dhead[static_cast<std::size_t>(label)] -= 1.0;
    return loss_value;
}

}  // namespace detail

/// Mean loss and mean gradient over the given sample indices of `data`.
inline std::pair<double, ParamVector> loss_and_gradient(const ParamVector& w,
                                                        const ModelSpec& spec,
                                                        const Dataset& data,
                                                        std::span<const std::size_t> batch) {
    spec.validate();
    if (batch.empty()) throw ArgumentError("loss_and_gradient: empty batch");
    if (w.size() != spec.param_count()) {
        throw ShapeError("loss_and_gradient: parameter vector has dim " +
                         std::to_string(w.size()) + ", model needs " +
                         std::to_string(spec.param_count()));
    }
    if (data.n_features != spec.input_dim()) {
        throw ShapeError("loss_and_gradient: dataset features do not match model input");
    }

    const std::size_t n_layers = spec.layer_sizes.size();
    ParamVector grad(w.size(), 0.0);
    double total_loss = 0.0;
    std::vector<std::vector<double>> acts;
    std::vector<double> delta, delta_prev;

    for (std::size_t s : batch) {
        if (s >= data.size()) throw ArgumentError("loss_and_gradient: sample index out of range");
        detail::forward(w, spec, data.row(s), acts);
        total_loss += detail::loss_and_head_grad(acts[n_layers - 1], data.labels[s], spec.loss, delta);

        // backprop, last layer first
        std::size_t offset_end = w.size();
        for (std::size_t l = n_layers - 1; l >= 1; --l) {
            const std::size_t n_out = spec.layer_sizes[l];
            const std::size_t n_in = spec.layer_sizes[l - 1];
            const std::size_t layer_params = n_out * n_in + (spec.bias ? n_out : 0);
            const std::size_t offset = offset_end - layer_params;
            const double* W = w.data() + offset;
            double* gW = grad.data() + offset;
            double* gb = spec.bias ? grad.data() + offset + n_out * n_in : nullptr;
            const std::vector<double>& in = acts[l - 1];

            if (l > 1) delta_prev.assign(n_in, 0.0);
            for (std::size_t o = 0; o < n_out; ++o) {
                const double d = delta[o];
                double* grow = gW + o * n_in;
                const double* wrow = W + o * n_in;
                for (std::size_t i = 0; i < n_in; ++i) {
                    grow[i] += d * in[i];
                    if (l > 1) delta_prev[i] += d * wrow[i];
                }
                if (gb) gb[o] += d;
            }
            if (l > 1) {
                for (std::size_t i = 0; i < n_in; ++i) {
                    delta_prev[i] *= detail::activate_grad(in[i], spec.activation);
                }
                delta.swap(delta_prev);
            }
            offset_end = offset;
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv_n;
    return {total_loss * inv_n, grad};
}

/// Convenience: loss and gradient over the whole dataset.
inline std::pair<double, ParamVector> loss_and_gradient(const ParamVector& w,
                                                        const ModelSpec& spec,
                                                        const Dataset& data) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return loss_and_gradient(w, spec, data, all);
}

struct LocalTrainResult {
    ParamVector update;  // w_start - w_end, the accumulated local update
    double final_loss;   // batch loss at the weights entering the last step
};

/// k steps of local (momentum-)SGD starting from w0, batches sampled with
/// replacement from device_data via the given seed. Returns the accumulated
/// update w0 - w_k rather than the last step's gradient. batch_size 0 means
/// full batch in dataset order, consuming no random draws.
inline LocalTrainResult local_train(const ParamVector& w0, int k, double eta_l,
                                    const Dataset& device_data, std::size_t batch_size,
                                    const ModelSpec& spec, std::uint64_t rng_seed,
                                    double momentum = 0.0) {
    if (k < 0) throw ArgumentError("local_train: k must be >= 0");
    if (eta_l <= 0.0) throw ArgumentError("local_train: eta_l must be > 0");
    device_data.validate();

    ParamVector w = w0;
    Rng rng(rng_seed);
    ParamVector velocity;
    double last_loss = 0.0;
    std::vector<std::size_t> batch;

    if (k == 0) {
        last_loss = loss_and_gradient(w0, spec, device_data).first;
        return {ParamVector(w0.size(), 0.0), last_loss};
    }

    for (int step = 0; step < k; ++step) {
        if (batch_size == 0 || batch_size >= device_data.size()) {
            batch.resize(device_data.size());
            for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
        } else {
            batch.resize(batch_size);
            for (std::size_t i = 0; i < batch_size; ++i) {
                batch[i] = static_cast<std::size_t>(rng.below(device_data.size()));
            }
        }
        auto [loss, grad] = loss_and_gradient(w, spec, device_data, batch);
        last_loss = loss;
        if (momentum > 0.0) {
            if (velocity.empty()) velocity.assign(w.size(), 0.0);
            for (std::size_t i = 0; i < w.size(); ++i) {
                velocity[i] = momentum * velocity[i] + grad[i];
                w[i] -= eta_l * velocity[i];
            }
        } else {
            axpy(-eta_l, grad, w);
        }
    }
    return {subtract(w0, w), last_loss};
}

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

/// Exact accuracy (correct / total, argmax with lowest-class-index ties) and
/// mean loss over a test set.
inline EvalResult evaluate(const ParamVector& w, const ModelSpec& spec, const Dataset& test) {
    spec.validate();
    if (test.size() == 0) throw ArgumentError("evaluate: empty test set");
    if (w.size() != spec.param_count()) throw ShapeError("evaluate: parameter dim mismatch");
    if (test.n_features != spec.input_dim()) {
        throw ShapeError("evaluate: dataset features do not match model input");
    }

    std::vector<std::vector<double>> acts;
    std::vector<double> dhead;
    std::size_t correct = 0;
    double total_loss = 0.0;
    for (std::size_t s = 0; s < test.size(); ++s) {
        detail::forward(w, spec, test.row(s), acts);
        const std::vector<double>& head = acts.back();
        std::size_t best = 0;
        for (std::size_t j = 1; j < head.size(); ++j) {
            if (head[j] > head[best]) best = j;  // strict: ties keep the lower index
        }
        if (static_cast<int>(best) == test.labels[s]) ++correct;
        total_loss += detail::loss_and_head_grad(head, test.labels[s], spec.loss, dhead);
    }
    return {static_cast<double>(correct) / static_cast<double>(test.size()),
            total_loss / static_cast<double>(test.size())};
}

}  // namespace aflsim
