#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace advfield::kernels {

namespace {

using diff_t = std::ptrdiff_t;

// Column split for a horizontal shift dx: [0,lo) clamps onto column 0,
// [lo,hi) is the unclamped run, [hi,w) clamps onto column w-1.
struct ColSplit {
    std::size_t lo, hi;
};

ColSplit col_split(std::size_t w, diff_t dx) {
    ColSplit s{0, w};
    if (dx > 0) {
        // shifts at or beyond the width leave no unclamped run
        s.hi = dx >= static_cast<diff_t>(w) ? 0 : w - static_cast<std::size_t>(dx);
    } else if (dx < 0) {
        s.lo = -dx >= static_cast<diff_t>(w) ? w : static_cast<std::size_t>(-dx);
    }
    return s;
}

std::size_t clamp_row(diff_t y, std::size_t h) {
    return static_cast<std::size_t>(std::clamp<diff_t>(y, 0, static_cast<diff_t>(h) - 1));
}

} // namespace

void conv2d_acc(const double* in, std::size_t h, std::size_t w,
                const double* k, std::size_t kh, std::size_t kw,
                Padding pad, double* out) {
    const diff_t cy = static_cast<diff_t>(kh) / 2;
    const diff_t cx = static_cast<diff_t>(kw) / 2;
    for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j) {
            const double kv = k[i * kw + j];
            if (kv == 0.0) continue;
            const diff_t dy = static_cast<diff_t>(i) - cy;
            const diff_t dx = static_cast<diff_t>(j) - cx;
            const auto s = col_split(w, dx);
            for (std::size_t y = 0; y < h; ++y) {
                const diff_t sy = static_cast<diff_t>(y) + dy;
                const bool row_clamped = sy < 0 || sy >= static_cast<diff_t>(h);
                if (row_clamped && pad == Padding::Zero) continue;
                double* orow = out + y * w;
                const double* irow = in + clamp_row(sy, h) * w;
                if (pad == Padding::Replicate) {
                    for (std::size_t x = 0; x < s.lo; ++x) orow[x] += kv * irow[0];
                    for (std::size_t x = s.hi; x < w; ++x) orow[x] += kv * irow[w - 1];
                }
                for (std::size_t x = s.lo; x < s.hi; ++x) {
                    orow[x] += kv * irow[static_cast<diff_t>(x) + dx];
                }
            }
        }
    }
}

void conv2d_acc_grad_input(const double* g_out, std::size_t h, std::size_t w,
                           const double* k, std::size_t kh, std::size_t kw,
                           Padding pad, double* g_in) {
    const diff_t cy = static_cast<diff_t>(kh) / 2;
    const diff_t cx = static_cast<diff_t>(kw) / 2;
    for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j) {
            const double kv = k[i * kw + j];
            if (kv == 0.0) continue;
            const diff_t dy = static_cast<diff_t>(i) - cy;
            const diff_t dx = static_cast<diff_t>(j) - cx;
            const auto s = col_split(w, dx);
            for (std::size_t y = 0; y < h; ++y) {
                const diff_t sy = static_cast<diff_t>(y) + dy;
                const bool row_clamped = sy < 0 || sy >= static_cast<diff_t>(h);
                if (row_clamped && pad == Padding::Zero) continue;
                const double* grow = g_out + y * w;
                double* irow = g_in + clamp_row(sy, h) * w;
                if (pad == Padding::Replicate) {
                    for (std::size_t x = 0; x < s.lo; ++x) irow[0] += kv * grow[x];
                    for (std::size_t x = s.hi; x < w; ++x) irow[w - 1] += kv * grow[x];
                }
                for (std::size_t x = s.lo; x < s.hi; ++x) {
                    irow[static_cast<diff_t>(x) + dx] += kv * grow[x];
                }
            }
        }
    }
}

void conv2d_acc_grad_kernel(const double* g_out, const double* in,
                            std::size_t h, std::size_t w,
                            std::size_t kh, std::size_t kw,
                            Padding pad, double* g_k) {
    const diff_t cy = static_cast<diff_t>(kh) / 2;
    const diff_t cx = static_cast<diff_t>(kw) / 2;
    for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t j = 0; j < kw; ++j) {
            const diff_t dy = static_cast<diff_t>(i) - cy;
            const diff_t dx = static_cast<diff_t>(j) - cx;
            const auto s = col_split(w, dx);
            double acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                const diff_t sy = static_cast<diff_t>(y) + dy;
                const bool row_clamped = sy < 0 || sy >= static_cast<diff_t>(h);
                if (row_clamped && pad == Padding::Zero) continue;
                const double* grow = g_out + y * w;
                const double* irow = in + clamp_row(sy, h) * w;
                if (pad == Padding::Replicate) {
                    for (std::size_t x = 0; x < s.lo; ++x) acc += grow[x] * irow[0];
                    for (std::size_t x = s.hi; x < w; ++x) acc += grow[x] * irow[w - 1];
                }
                for (std::size_t x = s.lo; x < s.hi; ++x) {
                    acc += grow[x] * irow[static_cast<diff_t>(x) + dx];
                }
            }
            g_k[i * kw + j] += acc;
        }
    }
}

void grid_sample_plane(const double* in, std::size_t h, std::size_t w,
                       const double* coords, double* out) {
    const double xmax = static_cast<double>(w - 1);
    const double ymax = static_cast<double>(h - 1);
    for (std::size_t p = 0, n = h * w; p < n; ++p) {
        const double px = std::clamp(coords[2 * p + 0], 0.0, xmax);
        const double py = std::clamp(coords[2 * p + 1], 0.0, ymax);
        const std::size_t x0 = static_cast<std::size_t>(px);
        const std::size_t y0 = static_cast<std::size_t>(py);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fx = px - static_cast<double>(x0);
        const double fy = py - static_cast<double>(y0);
        const double v00 = in[y0 * w + x0], v01 = in[y0 * w + x1];
        const double v10 = in[y1 * w + x0], v11 = in[y1 * w + x1];
        out[p] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                 fy * ((1.0 - fx) * v10 + fx * v11);
    }
}

void grid_sample_plane_grad(const double* g_out, const double* in,
                            std::size_t h, std::size_t w, const double* coords,
                            double* g_in, double* g_coords) {
    const double xmax = static_cast<double>(w - 1);
    const double ymax = static_cast<double>(h - 1);
    for (std::size_t p = 0, n = h * w; p < n; ++p) {
        const double g = g_out[p];
        if (g == 0.0) continue;
        const double rx = coords[2 * p + 0];
        const double ry = coords[2 * p + 1];
        const bool clamped_x = rx < 0.0 || rx > xmax; // clamped coords carry no gradient
        const bool clamped_y = ry < 0.0 || ry > ymax;
        const double px = std::clamp(rx, 0.0, xmax);
        const double py = std::clamp(ry, 0.0, ymax);
        const std::size_t x0 = static_cast<std::size_t>(px);
        const std::size_t y0 = static_cast<std::size_t>(py);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fx = px - static_cast<double>(x0);
        const double fy = py - static_cast<double>(y0);
        if (g_in) {
            g_in[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
            g_in[y0 * w + x1] += g * (1.0 - fy) * fx;
            g_in[y1 * w + x0] += g * fy * (1.0 - fx);
            g_in[y1 * w + x1] += g * fy * fx;
        }
        if (g_coords) {
            const double v00 = in[y0 * w + x0], v01 = in[y0 * w + x1];
            const double v10 = in[y1 * w + x0], v11 = in[y1 * w + x1];
            if (!clamped_x) {
                g_coords[2 * p + 0] +=
                    g * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
            }
            if (!clamped_y) {
                g_coords[2 * p + 1] +=
                    g * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
            }
        }
    }
}

void maxpool2(const double* in, std::size_t h, std::size_t w,
              double* out, std::size_t* argmax) {
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            std::size_t best = (2 * y) * w + 2 * x;
            double bv = in[best];
            const std::size_t cand[3] = {(2 * y) * w + 2 * x + 1,
                                         (2 * y + 1) * w + 2 * x,
                                         (2 * y + 1) * w + 2 * x + 1};
            for (std::size_t c : cand) {
                if (in[c] > bv) {
                    bv = in[c];
                    best = c;
                }
            }
            out[y * ow + x] = bv;
            argmax[y * ow + x] = best;
        }
    }
}

void upsample2_nearest(const double* in, std::size_t h, std::size_t w, double* out) {
    const std::size_t ow = 2 * w;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double v = in[y * w + x];
            out[(2 * y) * ow + 2 * x] = v;
            out[(2 * y) * ow + 2 * x + 1] = v;
            out[(2 * y + 1) * ow + 2 * x] = v;
            out[(2 * y + 1) * ow + 2 * x + 1] = v;
        }
    }
}

double bspline3(double t) {
    const double a = std::abs(t);
    if (a < 1.0) return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
    if (a < 2.0) {
        const double b = 2.0 - a;
        return b * b * b / 6.0;
    }
    return 0.0;
}

std::vector<double> bspline_weights(std::size_t n_out, std::size_t k) {
    std::vector<double> m(n_out * k, 0.0);
    const double step = static_cast<double>(k - 1) / static_cast<double>(n_out - 1);
    for (std::size_t x = 0; x < n_out; ++x) {
        const double u = static_cast<double>(x) * step;
        const diff_t base = static_cast<diff_t>(std::floor(u));
        for (diff_t i = base - 1; i <= base + 2; ++i) {
            const double wv = bspline3(u - static_cast<double>(i));
            if (wv == 0.0) continue;
            const std::size_t ci = static_cast<std::size_t>(
                std::clamp<diff_t>(i, 0, static_cast<diff_t>(k) - 1));
            m[x * k + ci] += wv;
        }
    }
    return m;
}

std::vector<double> gaussian_taps(double sigma) {
    if (sigma <= 0.0) return {1.0};
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> taps(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        taps[i + radius] = v;
        total += v;
    }
    for (double& v : taps) v /= total;
    return taps;
}

} // namespace advfield::kernels
