#include "advfield/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace advfield {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "}";
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_[0] = v;
    return t;
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("tensor: item() on non-scalar of shape " + shape_str(shape_));
    }
    return data_[0];
}

void ensure_finite(const Tensor& t, const char* what) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + ": non-finite value");
        }
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

namespace {

template <class F>
Tensor map2(const Tensor& a, const Tensor& b, const char* what, F&& f) {
    require_same_shape(a, b, what);
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0, n = a.numel(); i < n; ++i) po[i] = f(pa[i], pb[i]);
    ensure_finite(out, what);
    return out;
}

template <class F>
Tensor map1(const Tensor& a, const char* what, F&& f) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t i = 0, n = a.numel(); i < n; ++i) po[i] = f(pa[i]);
    ensure_finite(out, what);
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return map2(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return map2(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return map2(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
    return map1(a, "scale", [s](double x) { return x * s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return map1(a, "add_scalar", [s](double x) { return x + s; });
}

Tensor exp(const Tensor& a) {
    return map1(a, "exp", [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
    return map1(a, "log", [](double x) { return std::log(x); });
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

double mean(const Tensor& a) {
    return sum(a) / static_cast<double>(a.numel());
}

double min_value(const Tensor& a) {
    double m = a[0];
    for (double v : a.values()) m = std::min(m, v);
    return m;
}

double max_value(const Tensor& a) {
    double m = a[0];
    for (double v : a.values()) m = std::max(m, v);
    return m;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

} // namespace advfield
