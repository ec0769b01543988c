#pragma once

#include <functional>

#include "advfield/tensor.hpp"

namespace advfield {

// Central finite-difference gradient of a scalar function. Deliberately
// independent of the tape: this is the oracle the tape is checked against.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double step = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps near-zero
// entries from turning roundoff into huge ratios.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

} // namespace advfield
