#include "phrasedec/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace phrasedec {

void zero_grads(const ParamList& params) {
    for (Parameter* p : params) p->zero_grad();
}

double grad_norm(const ParamList& params) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (size_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    return std::sqrt(sq);
}

void clip_grad_norm(const ParamList& params, double max_norm) {
    double norm = grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return;
    double scale = max_norm / norm;
    for (Parameter* p : params)
        for (size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= scale;
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw ConfigError("unknown activation: " + name);
}

double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid: return sigmoid(x);
    }
    return x;
}

double activation_grad_from_output(Activation a, double y) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.numel() == 0)
        throw std::invalid_argument("softmax: expects a nonempty rank-1 tensor");
    if (!logits.all_finite()) throw NumericError("softmax: non-finite input");
    double mx = logits[0];
    for (size_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
    Tensor out({logits.numel()});
    double sum = 0.0;
    for (size_t i = 0; i < logits.numel(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (size_t i = 0; i < out.numel(); ++i) out[i] /= sum;
    return out;
}

Tensor log_softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.numel() == 0)
        throw std::invalid_argument("log_softmax: expects a nonempty rank-1 tensor");
    if (!logits.all_finite()) throw NumericError("log_softmax: non-finite input");
    double mx = logits[0];
    for (size_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (size_t i = 0; i < logits.numel(); ++i) sum += std::exp(logits[i] - mx);
    double lse = mx + std::log(sum);
    Tensor out({logits.numel()});
    for (size_t i = 0; i < out.numel(); ++i) out[i] = logits[i] - lse;
    return out;
}

GruCell::GruCell(const std::string& prefix, size_t in, size_t hid)
    : input_size(in),
      hidden_size(hid),
      Wz(prefix + ".Wz", {hid, in}),
      Uz(prefix + ".Uz", {hid, hid}),
      bz(prefix + ".bz", {hid}),
      Wr(prefix + ".Wr", {hid, in}),
      Ur(prefix + ".Ur", {hid, hid}),
      br(prefix + ".br", {hid}),
      Wh(prefix + ".Wh", {hid, in}),
      Uh(prefix + ".Uh", {hid, hid}),
      bh(prefix + ".bh", {hid}) {}

Tensor GruCell::step(const Tensor& x, const Tensor& h_prev, Cache* cache) const {
    if (x.rank() != 1 || x.numel() != input_size || h_prev.rank() != 1 ||
        h_prev.numel() != hidden_size)
        throw std::invalid_argument("GruCell::step: shape mismatch");

    Tensor z = bz.value;
    matvec_acc(Wz.value, x, z);
    matvec_acc(Uz.value, h_prev, z);
    for (size_t i = 0; i < hidden_size; ++i) z[i] = sigmoid(z[i]);

    Tensor r = br.value;
    matvec_acc(Wr.value, x, r);
    matvec_acc(Ur.value, h_prev, r);
    for (size_t i = 0; i < hidden_size; ++i) r[i] = sigmoid(r[i]);

    Tensor rh({hidden_size});
    for (size_t i = 0; i < hidden_size; ++i) rh[i] = r[i] * h_prev[i];

    Tensor hbar = bh.value;
    matvec_acc(Wh.value, x, hbar);
    matvec_acc(Uh.value, rh, hbar);
    for (size_t i = 0; i < hidden_size; ++i) hbar[i] = std::tanh(hbar[i]);

    Tensor h({hidden_size});
    for (size_t i = 0; i < hidden_size; ++i)
        h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * hbar[i];

    if (cache) {
        cache->x = x;
        cache->h_prev = h_prev;
        cache->z = z;
        cache->r = r;
        cache->hbar = hbar;
        cache->rh = rh;
    }
    return h;
}

void GruCell::backward(const Cache& c, const Tensor& dh, Tensor& dx, Tensor& dh_prev) {
    const size_t n = hidden_size;
    Tensor dz({n}), dhbar({n}), dh_prev_local({n});
    for (size_t i = 0; i < n; ++i) {
        dz[i] = dh[i] * (c.hbar[i] - c.h_prev[i]);
        dhbar[i] = dh[i] * c.z[i];
        dh_prev_local[i] = dh[i] * (1.0 - c.z[i]);
    }
    // hbar = tanh(pre_h)
    Tensor dpre_h({n});
    for (size_t i = 0; i < n; ++i) dpre_h[i] = dhbar[i] * (1.0 - c.hbar[i] * c.hbar[i]);
    outer_acc(dpre_h, c.x, Wh.grad);
    outer_acc(dpre_h, c.rh, Uh.grad);
    add_acc(bh.grad, dpre_h);
    matvec_t_acc(Wh.value, dpre_h, dx);
    Tensor drh({n});
    matvec_t_acc(Uh.value, dpre_h, drh);
    Tensor dr({n});
    for (size_t i = 0; i < n; ++i) {
        dr[i] = drh[i] * c.h_prev[i];
        dh_prev_local[i] += drh[i] * c.r[i];
    }
    // gates through sigmoid
    Tensor dpre_r({n}), dpre_z({n});
    for (size_t i = 0; i < n; ++i) {
        dpre_r[i] = dr[i] * c.r[i] * (1.0 - c.r[i]);
        dpre_z[i] = dz[i] * c.z[i] * (1.0 - c.z[i]);
    }
    outer_acc(dpre_r, c.x, Wr.grad);
    outer_acc(dpre_r, c.h_prev, Ur.grad);
    add_acc(br.grad, dpre_r);
    matvec_t_acc(Wr.value, dpre_r, dx);
    matvec_t_acc(Ur.value, dpre_r, dh_prev_local);

    outer_acc(dpre_z, c.x, Wz.grad);
    outer_acc(dpre_z, c.h_prev, Uz.grad);
    add_acc(bz.grad, dpre_z);
    matvec_t_acc(Wz.value, dpre_z, dx);
    matvec_t_acc(Uz.value, dpre_z, dh_prev_local);

    add_acc(dh_prev, dh_prev_local);
}

void GruCell::collect(ParamList& out) {
    for (Parameter* p : {&Wz, &Uz, &bz, &Wr, &Ur, &br, &Wh, &Uh, &bh}) out.push_back(p);
}

FeedForward::FeedForward(const std::string& prefix, const std::vector<size_t>& dims,
                         const std::vector<Activation>& acts) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw ConfigError("FeedForward: dims/activations mismatch");
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        std::string base = prefix + ".l" + std::to_string(l);
        layer.W = Parameter(base + ".W", {dims[l + 1], dims[l]});
        layer.b = Parameter(base + ".b", {dims[l + 1]});
        layer.act = acts[l];
        layers.push_back(std::move(layer));
    }
}

Tensor FeedForward::forward(const Tensor& x, Cache* cache) const {
    if (cache) {
        cache->inputs.clear();
        cache->outputs.clear();
    }
    Tensor cur = x;
    for (const Layer& layer : layers) {
        if (layer.W.value.extent(1) != cur.numel())
            throw std::invalid_argument("FeedForward: shape mismatch");
        if (cache) cache->inputs.push_back(cur);
        Tensor out = layer.b.value;
        matvec_acc(layer.W.value, cur, out);
        for (size_t i = 0; i < out.numel(); ++i)
            out[i] = apply_activation(layer.act, out[i]);
        if (cache) cache->outputs.push_back(out);
        cur = std::move(out);
    }
    return cur;
}

void FeedForward::backward(const Cache& cache, const Tensor& dy, Tensor& dx) {
    Tensor d = dy;
    for (size_t l = layers.size(); l-- > 0;) {
        Layer& layer = layers[l];
        const Tensor& out = cache.outputs[l];
        const Tensor& in = cache.inputs[l];
        Tensor dpre({out.numel()});
        for (size_t i = 0; i < out.numel(); ++i)
            dpre[i] = d[i] * activation_grad_from_output(layer.act, out[i]);
        outer_acc(dpre, in, layer.W.grad);
        add_acc(layer.b.grad, dpre);
        Tensor din({in.numel()});
        matvec_t_acc(layer.W.value, dpre, din);
        d = std::move(din);
    }
    add_acc(dx, d);
}

void FeedForward::collect(ParamList& out) {
    for (Layer& layer : layers) {
        out.push_back(&layer.W);
        out.push_back(&layer.b);
    }
}

double check_gradients(const ParamList& params,
                       const std::function<double(bool)>& loss_fn, double h) {
    if (h <= 0.0) throw std::invalid_argument("check_gradients: h must be positive");
    zero_grads(params);
    loss_fn(true);
    double worst = 0.0;
    for (Parameter* p : params) {
        for (size_t i = 0; i < p->value.numel(); ++i) {
            double saved = p->value[i];
            p->value[i] = saved + h;
            double lp = loss_fn(false);
            p->value[i] = saved - h;
            double lm = loss_fn(false);
            p->value[i] = saved;
            double numeric = (lp - lm) / (2.0 * h);
            double analytic = p->grad[i];
            // two-sided relative error with an absolute floor; below the
            // floor, central differences are dominated by roundoff
            double denom = std::max(1e-4, std::fabs(analytic) + std::fabs(numeric));
            double rel = std::fabs(analytic - numeric) / denom;
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace phrasedec
