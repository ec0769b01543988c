#include <doctest.h>

#include <cmath>

#include "advfield/tape.hpp"
#include "support.hpp"

using namespace advfield;
using testsupport::gradcheck;
using testsupport::random_tensor;

namespace {

// Direct-summation convolution oracle, independent of the library kernels.
Tensor conv_oracle(const Tensor& in, const Tensor& k, Padding pad) {
    const std::size_t h = in.extent(0), w = in.extent(1);
    const std::size_t kh = k.extent(0), kw = k.extent(1);
    const auto cy = static_cast<std::ptrdiff_t>(kh / 2);
    const auto cx = static_cast<std::ptrdiff_t>(kw / 2);
    Tensor out(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < kh; ++i) {
                for (std::size_t j = 0; j < kw; ++j) {
                    auto sy = static_cast<std::ptrdiff_t>(y + i) - cy;
                    auto sx = static_cast<std::ptrdiff_t>(x + j) - cx;
                    double v = 0.0;
                    if (pad == Padding::Replicate) {
                        sy = std::clamp<std::ptrdiff_t>(sy, 0, static_cast<std::ptrdiff_t>(h) - 1);
                        sx = std::clamp<std::ptrdiff_t>(sx, 0, static_cast<std::ptrdiff_t>(w) - 1);
                        v = in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    } else if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                               sx < static_cast<std::ptrdiff_t>(w)) {
                        v = in.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    }
                    acc += k.at(i, j) * v;
                }
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

Tensor run_conv(const Tensor& in, const Tensor& k, Padding pad) {
    Tape t;
    return conv2d(t.constant(in), t.constant(k), pad).value();
}

} // namespace

TEST_SUITE("tape") {

TEST_CASE("backward of sum of squares") {
    Tape t;
    Var x = t.leaf(Tensor(Shape{2}, {1.0, 2.0}));
    Var loss = sum(mul(x, x));
    const Tensor g = t.backward(loss, x);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("independent leaves receive zero gradients") {
    Tape t;
    Var x = t.leaf(Tensor(Shape{2}, {1.0, 2.0}));
    Var y = t.leaf(Tensor(Shape{3}, {1.0, 1.0, 1.0}));
    Var loss = sum(mul(x, x));
    const Tensor gy = t.backward(loss, y);
    CHECK(gy.shape() == Shape{3});
    for (double v : gy.values()) CHECK(v == 0.0);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(5);
    const Tensor xv = random_tensor(rng, {4});
    auto grads = [&](int which) {
        Tape t;
        Var x = t.leaf(xv);
        Var l1 = sum(mul(x, x));
        Var l2 = sum(exp(x));
        Var loss = which == 0 ? l1 : which == 1 ? l2 : add(l1, l2);
        return t.backward(loss, x);
    };
    const Tensor g1 = grads(0), g2 = grads(1), g12 = grads(2);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
    }
}

TEST_CASE("diamond graphs accumulate once per node") {
    Tape t;
    Var x = t.leaf(Tensor(Shape{1}, {3.0}));
    Var y = add(x, x);          // 2x
    Var loss = sum(mul(y, y));  // 4x^2
    const Tensor g = t.backward(loss, x);
    CHECK(g[0] == doctest::Approx(8.0 * 3.0).epsilon(1e-14));
}

TEST_CASE("backward validation") {
    Tape t;
    Var x = t.leaf(Tensor(Shape{2}, {1.0, 2.0}));
    Var v = mul(x, x);
    CHECK_THROWS_AS(t.backward(v, x), ShapeError); // non-scalar loss
    Var c = t.constant(Tensor::scalar(1.0));
    CHECK_THROWS_AS(t.backward(sum(v), c), Error);  // constant target
    CHECK_THROWS_AS(t.backward(sum(v), v), Error);  // non-leaf target

    Tape other;
    Var ox = other.leaf(Tensor(Shape{2}, {1.0, 2.0}));
    CHECK_THROWS_AS(add(x, ox), Error);             // cross-tape
    CHECK_THROWS_AS(t.backward(sum(v), ox), Error); // target not in graph
}

TEST_CASE("scalar broadcast in binary ops") {
    Tape t;
    Var x = t.leaf(Tensor(Shape{3}, {1.0, 2.0, 3.0}));
    Var s = t.leaf(Tensor::scalar(2.0));
    Var loss = sum(mul(x, s));
    const Var targets[2] = {x, s};
    const auto g = t.backward(loss, std::span<const Var>(targets));
    for (double v : g[0].values()) CHECK(v == 2.0);
    CHECK(g[1][0] == 6.0);
}

TEST_CASE("conv2d identity kernel is exact") {
    Rng rng(7);
    const Tensor img = random_tensor(rng, {6, 5});
    const Tensor delta(Shape{3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
    for (Padding pad : {Padding::Zero, Padding::Replicate}) {
        CHECK(testsupport::bitwise_equal(run_conv(img, delta, pad), img));
    }
}

TEST_CASE("conv2d box kernel keeps constants with replicate padding") {
    const Tensor img = Tensor::ones(Shape{5, 5});
    const Tensor box = Tensor::full(Shape{3, 3}, 1.0 / 9.0);
    const Tensor out = run_conv(img, box, Padding::Replicate);
    for (double v : out.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("conv2d matches the direct-summation oracle") {
    Rng rng(19);
    const Tensor sobel_x(Shape{3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
    // ramp image: constant horizontal gradient in the interior
    Tensor ramp(Shape{6, 7});
    for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t x = 0; x < 7; ++x) ramp.at(y, x) = 0.25 * static_cast<double>(x);
    }
    const Tensor edge = run_conv(ramp, sobel_x, Padding::Zero);
    const Tensor oracle = conv_oracle(ramp, sobel_x, Padding::Zero);
    CHECK(testsupport::bitwise_equal(edge, oracle));
    for (std::size_t y = 1; y < 5; ++y) {
        for (std::size_t x = 1; x < 6; ++x) {
            CHECK(edge.at(y, x) == doctest::Approx(8.0 * 0.25).epsilon(1e-12));
        }
    }

    for (int trial = 0; trial < 4; ++trial) {
        const Tensor img = random_tensor(rng, {8, 9});
        const Tensor k = random_tensor(rng, {3, 5});
        for (Padding pad : {Padding::Zero, Padding::Replicate}) {
            const Tensor got = run_conv(img, k, pad);
            const Tensor want = conv_oracle(img, k, pad);
            CHECK(max_relative_error(got, want) < 1e-12);
        }
    }
}

TEST_CASE("conv2d rejects even kernels") {
    Tape t;
    Var img = t.constant(Tensor::ones(Shape{4, 4}));
    Var k = t.constant(Tensor::ones(Shape{2, 3}));
    CHECK_THROWS_AS(conv2d(img, k, Padding::Zero), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(23);
    for (Padding pad : {Padding::Zero, Padding::Replicate}) {
        const Tensor img = random_tensor(rng, {5, 6});
        const Tensor k = random_tensor(rng, {3, 3});
        CHECK(gradcheck([&](Tape& t, Var x) {
                  return sum(mul(conv2d(x, t.constant(k), pad), x));
              }, img) < 1e-6);
        CHECK(gradcheck([&](Tape& t, Var kk) {
                  Var c = conv2d(t.constant(img), kk, pad);
                  return sum(mul(c, c));
              }, k) < 1e-6);
    }
    // multi-channel with a rank-4 kernel
    const Tensor img3 = random_tensor(rng, {2, 4, 4});
    const Tensor k4 = random_tensor(rng, {3, 2, 3, 3});
    CHECK(gradcheck([&](Tape& t, Var x) {
              Var c = conv2d(x, t.constant(k4), Padding::Zero);
              return sum(mul(c, c));
          }, img3) < 1e-6);
    CHECK(gradcheck([&](Tape& t, Var kk) {
              Var c = conv2d(t.constant(img3), kk, Padding::Zero);
              return sum(mul(c, c));
          }, k4) < 1e-6);
}

TEST_CASE("pooling, upsampling, concat, channel slicing gradients") {
    Rng rng(29);
    const Tensor x3 = random_tensor(rng, {2, 4, 6});
    CHECK(gradcheck([](Tape&, Var x) { return sum(mul(maxpool2(x), maxpool2(x))); }, x3) < 1e-6);
    CHECK(gradcheck([](Tape&, Var x) { return sum(mul(upsample2(x), upsample2(x))); }, x3) < 1e-6);
    const Tensor other = random_tensor(rng, {1, 4, 6});
    CHECK(gradcheck([&](Tape& t, Var x) {
              Var c = concat_channels(x, t.constant(other));
              return sum(mul(c, c));
          }, x3) < 1e-6);
    CHECK(gradcheck([](Tape&, Var x) {
              Var c = channel(x, 1);
              return sum(mul(c, c));
          }, x3) < 1e-6);
    CHECK(gradcheck([](Tape&, Var x) {
              Var b = reshape(x, {4, 12});
              return sum(mul(b, b));
          }, x3) < 1e-6);
}

TEST_CASE("bias_add and softmax gradients") {
    Rng rng(31);
    const Tensor x = random_tensor(rng, {3, 2, 2});
    const Tensor b = random_tensor(rng, {3});
    CHECK(gradcheck([&](Tape& t, Var xx) {
              Var s = bias_add(xx, t.constant(b));
              return sum(mul(s, s));
          }, x) < 1e-6);
    CHECK(gradcheck([&](Tape& t, Var bb) {
              Var s = bias_add(t.constant(x), bb);
              return sum(mul(s, s));
          }, b) < 1e-6);
    const Tensor weights = random_tensor(rng, {3, 2, 2});
    CHECK(gradcheck([&](Tape& t, Var xx) {
              Var p = softmax_channels(xx);
              return sum(mul(p, t.constant(weights)));
          }, x) < 1e-5);
}

TEST_CASE("softmax output is a per-pixel simplex") {
    Rng rng(37);
    Tape t;
    Var z = t.constant(random_tensor(rng, {4, 3, 3}, -50.0, 50.0));
    const Tensor p = softmax_channels(z).value();
    for (std::size_t px = 0; px < 9; ++px) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += p[c * 9 + px];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("cross entropy value and gradient") {
    Tape t;
    // uniform prediction over 3 classes -> loss = log 3
    Var p = t.constant(Tensor::full(Shape{3, 2, 2}, 1.0 / 3.0));
    const Tensor labels(Shape{2, 2}, {0.0, 1.0, 2.0, 1.0});
    CHECK(cross_entropy(p, labels).value().item() ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(p, Tensor(Shape{2, 2}, {0.0, 1.0, 3.0, 1.0})), Error);
    CHECK_THROWS_AS(cross_entropy(p, Tensor(Shape{2, 2}, {0.0, 1.5, 0.0, 1.0})), Error);

    Rng rng(41);
    Tensor probs = testsupport::random_softmax_map(rng, 3, 2, 2);
    CHECK(gradcheck([&](Tape& t2, Var x) { return cross_entropy(x, labels); }, probs) < 1e-6);
}

TEST_CASE("grid_sample: identity, translation, gradients") {
    Rng rng(43);
    const std::size_t h = 5, w = 6;
    const Tensor img = random_tensor(rng, {h, w});

    Tensor id(Shape{h, w, 2});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            id[(y * w + x) * 2 + 0] = static_cast<double>(x);
            id[(y * w + x) * 2 + 1] = static_cast<double>(y);
        }
    }
    {
        Tape t;
        const Tensor out = grid_sample(t.constant(img), t.constant(id)).value();
        CHECK(testsupport::bitwise_equal(out, img));
    }
    {
        // integer shift by one column: interior equals the shifted image
        Tensor shifted = id;
        for (std::size_t p = 0; p < h * w; ++p) shifted[2 * p] += 1.0;
        Tape t;
        const Tensor out = grid_sample(t.constant(img), t.constant(shifted)).value();
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x + 1 < w; ++x) CHECK(out.at(y, x) == img.at(y, x + 1));
        }
    }
    // fractional coordinates, gradcheck both arguments
    Tensor coords = id;
    for (std::size_t i = 0; i < coords.numel(); ++i) coords[i] += rng.uniform(0.15, 0.45);
    CHECK(gradcheck([&](Tape& t, Var x) {
              Var s = grid_sample(x, t.constant(coords));
              return sum(mul(s, s));
          }, img) < 1e-6);
    CHECK(gradcheck([&](Tape& t, Var c) {
              Var s = grid_sample(t.constant(img), c);
              return sum(mul(s, s));
          }, coords) < 1e-5);
}

TEST_CASE("field split/stack round trip and gradients") {
    Rng rng(47);
    const Tensor f = random_tensor(rng, {3, 4, 2});
    Tape t;
    auto [x, y] = split_field(t.constant(f));
    const Tensor back = stack_field(x, y).value();
    CHECK(testsupport::bitwise_equal(back, f));
    CHECK(gradcheck([](Tape&, Var ff) {
              auto [a, b] = split_field(ff);
              return add(sum(mul(a, a)), sum(mul(b, b)));
          }, f) < 1e-6);
}

TEST_CASE("composed random graphs match finite differences on 5 seeds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const Tensor x = random_tensor(rng, {4, 4});
        const Tensor k = random_tensor(rng, {3, 3});
        const double err = gradcheck(
            [&](Tape& t, Var v) {
                Var c = conv2d(exp(scale(v, 0.3)), t.constant(k), Padding::Replicate);
                Var r = relu(add_scalar(c, 0.05));
                return mean(mul(r, r));
            },
            x);
        CHECK(err < 1e-4);
    }
}

} // TEST_SUITE
