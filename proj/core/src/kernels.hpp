#pragma once

// Low-level numeric kernels behind the tape ops. Forward and adjoint loops
// share one clamped-index structure so gradients are exact adjoints of the
// forward computation, boundary handling included.

#include <cstddef>
#include <vector>

namespace advfield::kernels {

enum class Padding { Zero, Replicate };

// out[y][x] += sum_{i,j} k[i][j] * in[y+i-cy][x+j-cx], same-size output.
// Accumulates into out; caller zeroes beforehand.
void conv2d_acc(const double* in, std::size_t h, std::size_t w,
                const double* k, std::size_t kh, std::size_t kw,
                Padding pad, double* out);

// Adjoint w.r.t. the input: g_in += conv-scatter of g_out.
void conv2d_acc_grad_input(const double* g_out, std::size_t h, std::size_t w,
                           const double* k, std::size_t kh, std::size_t kw,
                           Padding pad, double* g_in);

// Adjoint w.r.t. the kernel: g_k[i][j] += <g_out, shifted in>.
void conv2d_acc_grad_kernel(const double* g_out, const double* in,
                            std::size_t h, std::size_t w,
                            std::size_t kh, std::size_t kw,
                            Padding pad, double* g_k);

// Bilinear sampling of one plane at absolute coordinates, replicate boundary
// (coordinates clamped to the valid rectangle).
// coords is {h,w,2} with component 0 = x (column), 1 = y (row).
void grid_sample_plane(const double* in, std::size_t h, std::size_t w,
                       const double* coords, double* out);

void grid_sample_plane_grad(const double* g_out, const double* in,
                            std::size_t h, std::size_t w, const double* coords,
                            double* g_in /*nullable*/, double* g_coords /*nullable*/);

// 2x2 max pooling; argmax records the flat input index chosen per output cell.
void maxpool2(const double* in, std::size_t h, std::size_t w,
              double* out, std::size_t* argmax);

// Nearest-neighbour 2x upsampling of one plane.
void upsample2_nearest(const double* in, std::size_t h, std::size_t w, double* out);

// Cubic B-spline kernel value, support (-2,2).
double bspline3(double t);

// Row-major {n_out, k} weight matrix mapping k control points uniformly
// spanning [0, n_out-1] (borders included) onto n_out dense positions.
// Out-of-range basis indices are clamped onto the edge controls, so the
// weights of every row sum to 1 and a constant grid maps to a constant field.
std::vector<double> bspline_weights(std::size_t n_out, std::size_t k);

// Normalized 1-D Gaussian taps, radius ceil(4*sigma).
std::vector<double> gaussian_taps(double sigma);

} // namespace advfield::kernels
