#include "advfield/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace advfield {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double step) {
    if (step <= 0.0) throw Error("finite_diff_grad: step must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double hi = f(probe);
        probe[i] = orig - step;
        const double lo = f(probe);
        probe[i] = orig;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    ensure_finite(grad, "finite_diff_grad");
    return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    require_same_shape(a, b, "max_relative_error");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

} // namespace advfield
