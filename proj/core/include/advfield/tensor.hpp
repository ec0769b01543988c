#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advfield/errors.hpp"

namespace advfield {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of 64-bit floats. The single value carrier of the
// library: images are {H,W}, feature maps {C,H,W}, vector fields {H,W,2}.
// Scalars are rank-0 tensors with one element. No implicit broadcasting.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {} // rank-0 zero scalar

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-2 {H,W}
    double& at(std::size_t y, std::size_t x) { return data_[y * shape_[1] + x]; }
    double at(std::size_t y, std::size_t x) const { return data_[y * shape_[1] + x]; }
    // rank-3 {C,H,W} (or {H,W,K} — caller owns the axis convention)
    double& at(std::size_t a, std::size_t b, std::size_t c) {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }
    double at(std::size_t a, std::size_t b, std::size_t c) const {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }

    // Value of a single-element tensor.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Throws NumericError if any element is NaN or Inf. Every public operation
// runs its output through this; non-finite values never propagate silently.
void ensure_finite(const Tensor& t, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// --- basic arithmetic on plain tensors (shape-checked, finiteness-checked) ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

double sum(const Tensor& a);
double mean(const Tensor& a);
double min_value(const Tensor& a);
double max_value(const Tensor& a);
double max_abs(const Tensor& a);
// Euclidean norm of the flattened tensor.
double l2_norm(const Tensor& a);

} // namespace advfield
