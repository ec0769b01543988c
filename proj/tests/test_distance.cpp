#include <doctest.h>

#include <cmath>

#include "advfield/distance.hpp"
#include "support.hpp"

using namespace advfield;
using testsupport::gradcheck;
using testsupport::random_softmax_map;

namespace {

// Direct summation oracle for the smoothed KL, mean over pixels.
double kl_oracle(const Tensor& p, const Tensor& q) {
    const std::size_t c = p.extent(0), plane = p.extent(1) * p.extent(2);
    double acc = 0.0;
    for (std::size_t px = 0; px < plane; ++px) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double pv = p[ci * plane + px];
            const double qv = q[ci * plane + px];
            acc += pv * std::log((pv + kDistanceEpsilon) / (qv + kDistanceEpsilon));
        }
    }
    return acc / static_cast<double>(plane);
}

ProbMap single_pixel(std::initializer_list<double> probs) {
    Tensor t(Shape{probs.size(), 1, 1});
    std::size_t i = 0;
    for (double v : probs) t[i++] = v;
    return ProbMap(std::move(t));
}

} // namespace

TEST_SUITE("distance") {

TEST_CASE("kl of a map with itself is zero") {
    Rng rng(3);
    const ProbMap p(random_softmax_map(rng, 3, 5, 5));
    CHECK(kl_divergence(p, p) == 0.0);
}

TEST_CASE("kl single-pixel values match the direct-summation oracle") {
    const ProbMap p = single_pixel({0.5, 0.5});
    const ProbMap q = single_pixel({0.9, 0.1});
    const double forward = kl_divergence(p, q);
    const double reverse = kl_divergence(q, p);
    CHECK(forward == doctest::Approx(kl_oracle(p.p, q.p)).epsilon(1e-14));
    CHECK(reverse == doctest::Approx(kl_oracle(q.p, p.p)).epsilon(1e-14));
    // frozen oracle values: 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1) and reversed
    CHECK(forward == doctest::Approx(0.510826).epsilon(1e-3));
    CHECK(reverse == doctest::Approx(0.368115).epsilon(1e-3));
    CHECK(forward != reverse); // asymmetry
}

TEST_CASE("kl is non-negative on random simplex maps and positive off-diagonal") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const ProbMap p(random_softmax_map(rng, 3, 4, 4));
        const ProbMap q(random_softmax_map(rng, 3, 4, 4));
        const double d = kl_divergence(p, q);
        CHECK(d >= -1e-12);
        CHECK(d == doctest::Approx(kl_oracle(p.p, q.p)).epsilon(1e-12));
        CHECK(d > 1e-6); // independent random maps differ
    }
}

TEST_CASE("contour of identical or constant maps is zero") {
    Rng rng(11);
    const ProbMap p(random_softmax_map(rng, 2, 6, 6));
    CHECK(contour_distance(p, p, {1}) == 0.0);

    // two different constant maps: Sobel responses vanish in the interior
    Tensor a(Shape{2, 4, 4});
    Tensor b(Shape{2, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
        a[i] = 0.3;
        a[16 + i] = 0.7;
        b[i] = 0.6;
        b[16 + i] = 0.4;
    }
    // zero padding makes the frame itself an edge, so compare equal-border
    // constants instead: contour(c, c) = 0 is the meaningful exact case and
    // interior-only responses cancel between the two maps' identical shapes
    const double d = contour_distance(ProbMap(a), ProbMap(b), {1});
    const double self = contour_distance(ProbMap(a), ProbMap(a), {1});
    CHECK(self == 0.0);
    CHECK(d > 0.0); // the frame edge differs between different constants
}

TEST_CASE("contour equals the norm of the edge response against a flat map") {
    // p has a vertical edge; q is uniform, so S(q) vanishes except the frame,
    // computed against a direct convolution oracle
    const std::size_t h = 6, w = 6;
    Tensor p(Shape{2, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double fg = x >= 3 ? 1.0 : 0.0;
            p[0 * h * w + y * w + x] = 1.0 - fg;
            p[1 * h * w + y * w + x] = fg;
        }
    }
    Tensor q = Tensor::full(Shape{2, h, w}, 0.5);

    auto sobel_apply = [&](const Tensor& plane, bool xdir) {
        const double kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
        const double ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
        const double* k = xdir ? kx : ky;
        Tensor out(Shape{h, w});
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = 0; i < 3; ++i) {
                    for (int j = 0; j < 3; ++j) {
                        const auto sy = static_cast<std::ptrdiff_t>(y) + i - 1;
                        const auto sx = static_cast<std::ptrdiff_t>(x) + j - 1;
                        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx < 0 ||
                            sx >= static_cast<std::ptrdiff_t>(w)) {
                            continue; // zero padding
                        }
                        acc += k[i * 3 + j] *
                               plane[static_cast<std::size_t>(sy) * w +
                                     static_cast<std::size_t>(sx)];
                    }
                }
                out.at(y, x) = acc;
            }
        }
        return out;
    };
    auto norm2 = [](const Tensor& t) { return l2_norm(t); };

    Tensor pfg(Shape{h, w}), qfg(Shape{h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        pfg[i] = p[h * w + i];
        qfg[i] = q[h * w + i];
    }
    const double oracle = norm2(sub(sobel_apply(pfg, true), sobel_apply(qfg, true))) +
                          norm2(sub(sobel_apply(pfg, false), sobel_apply(qfg, false)));
    CHECK(contour_distance(ProbMap(p), ProbMap(q), {1}) ==
          doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("contour is symmetric") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const ProbMap p(random_softmax_map(rng, 3, 5, 5));
        const ProbMap q(random_softmax_map(rng, 3, 5, 5));
        const double pq = contour_distance(p, q, {1, 2});
        const double qp = contour_distance(q, p, {1, 2});
        CHECK(std::abs(pq - qp) < 1e-10);
    }
}

TEST_CASE("contour rejects an empty foreground set") {
    Rng rng(17);
    const ProbMap p(random_softmax_map(rng, 2, 4, 4));
    CHECK_THROWS_AS(contour_distance(p, p, {}), ConfigError);
    CHECK_THROWS_AS(contour_distance(p, p, {5}), ConfigError);
}

TEST_CASE("composite recomposes from its terms") {
    Rng rng(19);
    const ProbMap p(random_softmax_map(rng, 2, 6, 6));
    const ProbMap q(random_softmax_map(rng, 2, 6, 6));
    const std::vector<std::size_t> fg{1};

    // w = 0: exactly the KL term
    CHECK(composite_distance(p, q, 0.0, fg) == kl_divergence(p, q));
    CHECK(composite_distance(p, p, 0.5, fg) == 0.0);

    const double kl = kl_divergence(p, q);
    const double ct = contour_distance(p, q, fg);
    CHECK(composite_distance(p, q, 0.5, fg) ==
          doctest::Approx(kl + 0.5 * ct).epsilon(1e-12));

    // monotone in w when the contour term is positive
    CHECK(ct > 0.0);
    double prev = -1.0;
    for (double w : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        const double d = composite_distance(p, q, w, fg);
        CHECK(d > prev);
        prev = d;
    }
    CHECK_THROWS_AS(composite_distance(p, q, -0.1, fg), ConfigError);
}

TEST_CASE("distance gradients w.r.t. the perturbed map match finite differences") {
    Rng rng(23);
    const Tensor p = random_softmax_map(rng, 2, 4, 4);
    const Tensor q = random_softmax_map(rng, 2, 4, 4);
    const std::vector<std::size_t> fg{1};
    CHECK(gradcheck([&](Tape& t, Var qq) {
              return kl_divergence(t.constant(p), qq);
          }, q) < 1e-4);
    CHECK(gradcheck([&](Tape& t, Var qq) {
              return contour_distance(t.constant(p), qq, fg);
          }, q) < 1e-4);
    CHECK(gradcheck([&](Tape& t, Var qq) {
              return composite_distance(t.constant(p), qq, 0.5, fg);
          }, q) < 1e-4);
    // and through p when it is not detached
    CHECK(gradcheck([&](Tape& t, Var pp) {
              return composite_distance(pp, t.constant(q), 0.5, fg);
          }, p) < 1e-4);
}

TEST_CASE("probability map validation") {
    Tensor bad(Shape{2, 1, 1}, {0.6, 0.6});
    CHECK_THROWS_AS(ProbMap{bad}, NumericError);
    Tensor neg(Shape{2, 1, 1}, {1.2, -0.2});
    CHECK_THROWS_AS(ProbMap{neg}, NumericError);
    Tensor rank(Shape{2, 2}, {1, 0, 0, 1});
    CHECK_THROWS_AS(ProbMap{rank}, ShapeError);

    const ProbMap ok = single_pixel({0.25, 0.75});
    CHECK(ok.argmax_mask()[0] == 1.0);
    CHECK(default_foreground(3) == std::vector<std::size_t>{1, 2});
}

} // TEST_SUITE
