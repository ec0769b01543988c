#pragma once

#include <functional>

#include "advfield/gradcheck.hpp"
#include "advfield/rng.hpp"
#include "advfield/tape.hpp"

namespace testsupport {

using namespace advfield;

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Random per-pixel softmax map built without the tape's softmax op.
inline Tensor random_softmax_map(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
    Tensor m(Shape{c, h, w});
    const std::size_t plane = h * w;
    for (std::size_t p = 0; p < plane; ++p) {
        double total = 0.0;
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double e = std::exp(rng.uniform(-2.0, 2.0));
            m[ci * plane + p] = e;
            total += e;
        }
        for (std::size_t ci = 0; ci < c; ++ci) m[ci * plane + p] /= total;
    }
    return m;
}

// Max relative error between tape backward and central finite differences for
// a scalar graph built from one leaf.
inline double gradcheck(const std::function<Var(Tape&, Var)>& build, const Tensor& x,
                        double step = 1e-5) {
    Tape tape;
    Var leaf = tape.leaf(x);
    const Tensor analytic = tape.backward(build(tape, leaf), leaf);
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& probe) {
            Tape t2;
            Var l2 = t2.leaf(probe);
            return build(t2, l2).value().item();
        },
        x, step);
    return max_relative_error(analytic, numeric);
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

} // namespace testsupport
