#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace phrasedec {

// Dense row-major array of 64-bit reals. All model math runs on these.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), 0.0);
    }

    Tensor(std::vector<size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != numel_of(shape_))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t numel() const { return data_.size(); }
    size_t extent(size_t d) const { return shape_.at(d); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    double at(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static size_t numel_of(const std::vector<size_t>& shape) {
        size_t n = 1;
        for (size_t e : shape) {
            if (e == 0) return 0;
            n *= e;
        }
        return n;
    }

  private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

inline Tensor vec_tensor(std::vector<double> v) {
    size_t n = v.size();
    return Tensor({n}, std::move(v));
}

// y += W x  with W:{m,n}, x:{n}, y:{m}
void matvec_acc(const Tensor& w, const Tensor& x, Tensor& y);
// y = W x
Tensor matvec(const Tensor& w, const Tensor& x);
// x_grad += W^T y_grad
void matvec_t_acc(const Tensor& w, const Tensor& y_grad, Tensor& x_grad);
// W_grad += y_grad * x^T (outer product)
void outer_acc(const Tensor& y_grad, const Tensor& x, Tensor& w_grad);

void add_acc(Tensor& dst, const Tensor& src);          // dst += src
void add_scaled(Tensor& dst, const Tensor& src, double a);  // dst += a*src
double dot(const Tensor& a, const Tensor& b);

Tensor concat(const Tensor& a, const Tensor& b);
Tensor concat(std::initializer_list<const Tensor*> parts);

}  // namespace phrasedec
