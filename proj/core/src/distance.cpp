#include "advfield/distance.hpp"

#include <cmath>

namespace advfield {

ProbMap::ProbMap(Tensor p_) : p(std::move(p_)) {
    if (p.rank() != 3) throw ShapeError("probability map: expected {C,H,W}");
    ensure_finite(p, "probability map");
    const std::size_t c = p.extent(0), plane = p.extent(1) * p.extent(2);
    for (std::size_t px = 0; px < plane; ++px) {
        double s = 0.0;
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double v = p[ci * plane + px];
            if (v < -1e-12 || v > 1.0 + 1e-12) {
                throw NumericError("probability map: value outside [0,1]");
            }
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw NumericError("probability map: pixel does not sum to 1");
        }
    }
}

Tensor ProbMap::argmax_mask() const {
    const std::size_t c = p.extent(0), plane = p.extent(1) * p.extent(2);
    Tensor out(Shape{p.extent(1), p.extent(2)});
    for (std::size_t px = 0; px < plane; ++px) {
        std::size_t best = 0;
        double bv = p[px];
        for (std::size_t ci = 1; ci < c; ++ci) {
            if (p[ci * plane + px] > bv) {
                bv = p[ci * plane + px];
                best = ci;
            }
        }
        out[px] = static_cast<double>(best);
    }
    return out;
}

namespace {

void check_probmap_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rank() != 3) throw ShapeError(std::string(op) + ": expected {C,H,W} maps");
    require_same_shape(a, b, op);
}

} // namespace

Var kl_divergence(Var p, Var phat) {
    check_probmap_pair(p.value(), phat.value(), "kl_divergence");
    const double pixels = static_cast<double>(p.value().extent(1) * p.value().extent(2));
    Var lp = log(add_scalar(p, kDistanceEpsilon));
    Var lq = log(add_scalar(phat, kDistanceEpsilon));
    return scale(sum(mul(p, sub(lp, lq))), 1.0 / pixels);
}

Var contour_distance(Var p, Var phat, const std::vector<std::size_t>& foreground) {
    check_probmap_pair(p.value(), phat.value(), "contour_distance");
    if (foreground.empty()) throw ConfigError("contour_distance: empty foreground set");
    const std::size_t classes = p.value().extent(0);
    Tape& t = *p.tape;
    Var sobel_x = t.constant(
        Tensor(Shape{3, 3}, {-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}));
    Var sobel_y = t.constant(
        Tensor(Shape{3, 3}, {-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0}));

    Var total = t.constant(Tensor::scalar(0.0));
    for (const std::size_t m : foreground) {
        if (m >= classes) throw ConfigError("contour_distance: foreground channel out of range");
        Var pm = channel(p, m);
        Var qm = channel(phat, m);
        for (Var s : {sobel_x, sobel_y}) {
            Var e = sub(conv2d(pm, s, Padding::Zero), conv2d(qm, s, Padding::Zero));
            total = add(total, sqrt(sum(mul(e, e))));
        }
    }
    return total;
}

Var composite_distance(Var p, Var phat, double w,
                       const std::vector<std::size_t>& foreground) {
    if (w < 0.0) throw ConfigError("composite_distance: weight must be >= 0");
    Var kl = kl_divergence(p, phat);
    if (w == 0.0) return kl;
    return add(kl, scale(contour_distance(p, phat, foreground), w));
}

double kl_divergence(const ProbMap& p, const ProbMap& phat) {
    Tape t;
    return kl_divergence(t.constant(p.p), t.constant(phat.p)).value().item();
}

double contour_distance(const ProbMap& p, const ProbMap& phat,
                        const std::vector<std::size_t>& foreground) {
    Tape t;
    return contour_distance(t.constant(p.p), t.constant(phat.p), foreground).value().item();
}

double composite_distance(const ProbMap& p, const ProbMap& phat, double w,
                          const std::vector<std::size_t>& foreground) {
    Tape t;
    return composite_distance(t.constant(p.p), t.constant(phat.p), w, foreground)
        .value()
        .item();
}

std::vector<std::size_t> default_foreground(std::size_t classes) {
    if (classes < 2) throw ConfigError("default_foreground: need at least 2 classes");
    std::vector<std::size_t> fg;
    for (std::size_t c = 1; c < classes; ++c) fg.push_back(c);
    return fg;
}

} // namespace advfield
