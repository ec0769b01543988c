#pragma once

#include "advfield/rng.hpp"
#include "advfield/sample.hpp"
#include "advfield/tape.hpp"

namespace advfield {

// k x k log-domain control points for a multiplicative bias field. alpha
// bounds the realized field: |phi - 1| <= alpha with phi > 0.
struct ControlGrid {
    Tensor values; // {k,k}
    double alpha = 0.3;

    ControlGrid(Tensor values_, double alpha_);
    std::size_t k() const { return values.extent(0); }
};

// Realized multiplicative bias field, strictly positive.
struct BiasField {
    Tensor phi; // {H,W}
};

// Stationary velocity field in pixel units; beta bounds the per-pixel
// Euclidean magnitude after projection.
struct VelocityField {
    Tensor v; // {H,W,2}, component 0 = x, 1 = y
    double beta = 2.0;
};

// Absolute sampling coordinates of a dense deformation.
struct DeformationField {
    Tensor phi_xy; // {H,W,2}
};

// Gaussian regularization of the morphological transform: fluid smoothing of
// the velocity, diffusion smoothing of the integrated displacement.
struct MorphRegularization {
    double sigma_v = 1.5;
    double sigma_phi = 1.0;
    int squaring_steps = 6;
};

struct RandAugConfig {
    double scale_min = 0.9, scale_max = 1.1;
    double rotate_max_deg = 15.0;
    double translate_max = 3.0; // pixels
    double flip_x_prob = 0.5, flip_y_prob = 0.5;
    double brightness_max = 0.1, contrast_max = 0.1;
    double elastic_sigma = 4.0, elastic_magnitude = 1.5;

    void validate() const;
};

// --- differentiable (tape) transforms ---

// Dense {H,W} field from a {k,k} grid: separable cubic B-spline weights with
// control points spanning the image borders; exactly linear in the grid.
Var bspline_upsample(Var grid, std::size_t h, std::size_t w);

// Rescales field deviations so max|phi-1| <= alpha (no-op when already
// feasible); idempotent. Gradient passes straight through.
Var project_bias(Var phi, double alpha);

// exp(upsampled log grid), then projected; strictly positive.
Var realize_bias_field(Var log_grid, std::size_t h, std::size_t w, double alpha);

Var apply_bias(Var image, Var phi);

// Separable Gaussian (taps truncated at 4*sigma, replicate padding) on a
// {H,W} plane or a {H,W,2} field; sigma 0 is the identity.
Var gaussian_smooth(Var field, double sigma);

// Scaling-and-squaring integration of a stationary velocity field over unit
// time; returns absolute coordinates {H,W,2}. Zero velocity gives the
// identity mapping exactly.
Var integrate_svf(Var velocity, int squaring_steps);

// integrate_svf plus diffusion smoothing of the displacement.
Var realize_deformation(Var velocity, const MorphRegularization& reg);

// Bilinear warp of {H,W} or {C,H,W} values at absolute coordinates.
Var warp(Var input, Var coords);

// --- plain-value counterparts ---

Tensor bspline_upsample(const Tensor& grid, std::size_t h, std::size_t w);
BiasField realize_bias(const ControlGrid& grid, std::size_t h, std::size_t w);
Tensor apply_bias(const Tensor& image, const BiasField& field);
Tensor gaussian_smooth(const Tensor& field, double sigma);
DeformationField integrate_svf(const VelocityField& vf, int squaring_steps = 6);
DeformationField realize_deformation(const VelocityField& vf, const MorphRegularization& reg);
Tensor warp_image(const Tensor& image, const DeformationField& def);
// Masks are warped through their one-hot probability channels, then argmax.
Tensor warp_mask(const Tensor& mask, const DeformationField& def, std::size_t classes);

// {H,W,2} absolute coordinates of the identity mapping.
Tensor identity_grid(std::size_t h, std::size_t w);

// first, then second: x -> second(first(x)).
DeformationField compose_deformations(const DeformationField& first,
                                      const DeformationField& second);

// --- stochastic constructors ---

// Control values uniform in [-log(1+alpha), log(1+alpha)], then realized.
ControlGrid random_bias_grid(Rng& rng, double alpha, std::size_t k);
BiasField random_bias(Rng& rng, double alpha, std::size_t k, std::size_t h, std::size_t w);

// Smoothed white noise rescaled so the max per-pixel magnitude equals
// `magnitude` (when nonzero).
VelocityField random_velocity(Rng& rng, double magnitude, double sigma,
                              std::size_t h, std::size_t w, double beta);

// Fluid smoothing followed by the beta magnitude projection.
VelocityField project_velocity(const VelocityField& vf, double sigma_v);

// Affine + flips + elastic geometry applied to image and mask alike;
// brightness/contrast to the image only. Deterministic in rng.
Sample rand_augment(const Sample& sample, const RandAugConfig& cfg, Rng& rng);

} // namespace advfield
