#pragma once

#include <functional>
#include <string>
#include <vector>

#include "phrasedec/common.hpp"
#include "phrasedec/tensor.hpp"

namespace phrasedec {

// Trainable tensor with a same-shaped gradient accumulator.
struct Parameter {
    Tensor value;
    Tensor grad;
    std::string name;

    Parameter() = default;
    Parameter(std::string n, std::vector<size_t> shape)
        : value(shape), grad(std::move(shape)), name(std::move(n)) {}

    void zero_grad() { grad.fill(0.0); }
    void init_uniform(Rng& rng, double lo = -0.08, double hi = 0.08) {
        for (size_t i = 0; i < value.numel(); ++i) value[i] = rng.uniform(lo, hi);
    }
};

using ParamList = std::vector<Parameter*>;

void zero_grads(const ParamList& params);
double grad_norm(const ParamList& params);
// Rescales gradients so the global norm is at most max_norm.
void clip_grad_norm(const ParamList& params, double max_norm);

enum class Activation { Identity, Tanh, Sigmoid };

Activation activation_from_string(const std::string& name);  // ConfigError on unknown
double apply_activation(Activation a, double x);
// Derivative expressed through the activation output y.
double activation_grad_from_output(Activation a, double y);

// Stable softmax over a rank-1 tensor. NumericError on non-finite input.
Tensor softmax(const Tensor& logits);
// Returns log-softmax; same stability construction.
Tensor log_softmax(const Tensor& logits);

double sigmoid(double x);

// Gated recurrent cell. Forward caches the gate values needed for backward.
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hbar = tanh(Wh x + Uh (r.h) + bh)
//   h' = (1-z).h + z.hbar
struct GruCell {
    size_t input_size = 0;
    size_t hidden_size = 0;
    Parameter Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;

    GruCell() = default;
    GruCell(const std::string& prefix, size_t in, size_t hid);

    struct Cache {
        Tensor x, h_prev, z, r, hbar, rh;
    };

    // cache may be null for inference-only use.
    Tensor step(const Tensor& x, const Tensor& h_prev, Cache* cache = nullptr) const;

    // Accumulates parameter gradients; adds input gradients into dx / dh_prev.
    void backward(const Cache& cache, const Tensor& dh, Tensor& dx, Tensor& dh_prev);

    void collect(ParamList& out);
};

// Stack of affine layers with per-layer activations.
struct FeedForward {
    struct Layer {
        Parameter W, b;
        Activation act = Activation::Identity;
    };
    std::vector<Layer> layers;

    FeedForward() = default;
    FeedForward(const std::string& prefix, const std::vector<size_t>& dims,
                const std::vector<Activation>& acts);

    struct Cache {
        std::vector<Tensor> inputs;   // input to each layer
        std::vector<Tensor> outputs;  // post-activation output of each layer
    };

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const Tensor& dy, Tensor& dx);

    void collect(ParamList& out);
};

// Compares analytic gradients (already accumulated by loss_fn(true)) against
// central finite differences of loss_fn(false). Returns the worst relative
// error over every parameter component.
double check_gradients(const ParamList& params,
                       const std::function<double(bool with_grad)>& loss_fn,
                       double h = 1e-5);

}  // namespace phrasedec
