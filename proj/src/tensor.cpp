#include "phrasedec/tensor.hpp"

namespace phrasedec {

void matvec_acc(const Tensor& w, const Tensor& x, Tensor& y) {
    if (w.rank() != 2 || x.rank() != 1 || y.rank() != 1 || w.extent(1) != x.numel() ||
        w.extent(0) != y.numel())
        throw std::invalid_argument("matvec: shape mismatch");
    const size_t m = w.extent(0), n = w.extent(1);
    const double* wd = w.data();
    const double* xd = x.data();
    double* yd = y.data();
    for (size_t i = 0; i < m; ++i) {
        const double* row = wd + i * n;
        double acc = 0.0;
        for (size_t j = 0; j < n; ++j) acc += row[j] * xd[j];
        yd[i] += acc;
    }
}

Tensor matvec(const Tensor& w, const Tensor& x) {
    Tensor y({w.extent(0)});
    matvec_acc(w, x, y);
    return y;
}

void matvec_t_acc(const Tensor& w, const Tensor& y_grad, Tensor& x_grad) {
    if (w.rank() != 2 || w.extent(0) != y_grad.numel() || w.extent(1) != x_grad.numel())
        throw std::invalid_argument("matvec_t: shape mismatch");
    const size_t m = w.extent(0), n = w.extent(1);
    const double* wd = w.data();
    const double* gd = y_grad.data();
    double* xd = x_grad.data();
    for (size_t i = 0; i < m; ++i) {
        const double gi = gd[i];
        if (gi == 0.0) continue;
        const double* row = wd + i * n;
        for (size_t j = 0; j < n; ++j) xd[j] += row[j] * gi;
    }
}

void outer_acc(const Tensor& y_grad, const Tensor& x, Tensor& w_grad) {
    if (w_grad.rank() != 2 || w_grad.extent(0) != y_grad.numel() ||
        w_grad.extent(1) != x.numel())
        throw std::invalid_argument("outer: shape mismatch");
    const size_t m = y_grad.numel(), n = x.numel();
    const double* gd = y_grad.data();
    const double* xd = x.data();
    double* wd = w_grad.data();
    for (size_t i = 0; i < m; ++i) {
        const double gi = gd[i];
        if (gi == 0.0) continue;
        double* row = wd + i * n;
        for (size_t j = 0; j < n; ++j) row[j] += gi * xd[j];
    }
}

void add_acc(Tensor& dst, const Tensor& src) {
    if (!dst.same_shape(src)) throw std::invalid_argument("add: shape mismatch");
    double* d = dst.data();
    const double* s = src.data();
    for (size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

void add_scaled(Tensor& dst, const Tensor& src, double a) {
    if (!dst.same_shape(src)) throw std::invalid_argument("add_scaled: shape mismatch");
    double* d = dst.data();
    const double* s = src.data();
    for (size_t i = 0; i < dst.numel(); ++i) d[i] += a * s[i];
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("dot: size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    return concat({&a, &b});
}

Tensor concat(std::initializer_list<const Tensor*> parts) {
    size_t n = 0;
    for (const Tensor* p : parts) n += p->numel();
    Tensor out({n});
    size_t off = 0;
    for (const Tensor* p : parts) {
        for (size_t i = 0; i < p->numel(); ++i) out[off + i] = (*p)[i];
        off += p->numel();
    }
    return out;
}

}  // namespace phrasedec
