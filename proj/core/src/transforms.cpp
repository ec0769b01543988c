#include "advfield/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"

namespace advfield {

ControlGrid::ControlGrid(Tensor values_, double alpha_)
    : values(std::move(values_)), alpha(alpha_) {
    if (values.rank() != 2 || values.extent(0) != values.extent(1)) {
        throw ShapeError("control grid: expected square {k,k} values");
    }
    if (values.extent(0) < 2) throw ConfigError("control grid: k must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("control grid: alpha must lie in (0,1)");
    }
    ensure_finite(values, "control grid");
}

void RandAugConfig::validate() const {
    if (!(scale_min > 0.0) || scale_min > scale_max) {
        throw ConfigError("rand_augment: scale range must satisfy 0 < min <= max");
    }
    if (rotate_max_deg < 0.0 || translate_max < 0.0 || brightness_max < 0.0 ||
        contrast_max < 0.0 || elastic_sigma < 0.0 || elastic_magnitude < 0.0) {
        throw ConfigError("rand_augment: ranges must be non-negative");
    }
    if (flip_x_prob < 0.0 || flip_x_prob > 1.0 || flip_y_prob < 0.0 || flip_y_prob > 1.0) {
        throw ConfigError("rand_augment: flip probabilities must lie in [0,1]");
    }
}

// ---------------------------------------------------------------------------
// B-spline upsampling
// ---------------------------------------------------------------------------

Var bspline_upsample(Var grid, std::size_t h, std::size_t w) {
    const Tensor& g = grid.value();
    if (g.rank() != 2 || g.extent(0) != g.extent(1)) {
        throw ShapeError("bspline_upsample: expected square {k,k} grid");
    }
    const std::size_t k = g.extent(0);
    if (k < 2) throw ConfigError("bspline_upsample: k must be >= 2");
    if (h < k || w < k) {
        throw ShapeError("bspline_upsample: image extents must be >= grid size");
    }
    const std::vector<double> wy = kernels::bspline_weights(h, k);
    const std::vector<double> wx = kernels::bspline_weights(w, k);

    // field = Wy * G * Wx^T via a {k,w} intermediate
    Tensor out(Shape{h, w});
    std::vector<double> tmp(k * w, 0.0);
    for (std::size_t jy = 0; jy < k; ++jy) {
        for (std::size_t jx = 0; jx < k; ++jx) {
            const double gv = g[jy * k + jx];
            if (gv == 0.0) continue;
            for (std::size_t x = 0; x < w; ++x) tmp[jy * w + x] += gv * wx[x * k + jx];
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t jy = 0; jy < k; ++jy) {
            const double wv = wy[y * k + jy];
            if (wv == 0.0) continue;
            for (std::size_t x = 0; x < w; ++x) out[y * w + x] += wv * tmp[jy * w + x];
        }
    }

    const int ig = grid.id;
    return grid.tape->record(
        "bspline_upsample", std::move(out), {ig},
        [ig, k, h, w, wy, wx](Tape& t, const Tensor& gout) {
            // grad_G = Wy^T * gout * Wx
            std::vector<double> tmp2(k * w, 0.0);
            for (std::size_t jy = 0; jy < k; ++jy) {
                for (std::size_t y = 0; y < h; ++y) {
                    const double wv = wy[y * k + jy];
                    if (wv == 0.0) continue;
                    const double* grow = gout.data() + y * w;
                    for (std::size_t x = 0; x < w; ++x) tmp2[jy * w + x] += wv * grow[x];
                }
            }
            Tensor gg(t.value_of(ig).shape());
            for (std::size_t jy = 0; jy < k; ++jy) {
                for (std::size_t jx = 0; jx < k; ++jx) {
                    double acc = 0.0;
                    for (std::size_t x = 0; x < w; ++x) acc += tmp2[jy * w + x] * wx[x * k + jx];
                    gg[jy * k + jx] = acc;
                }
            }
            t.accumulate(ig, std::move(gg));
        });
}

// ---------------------------------------------------------------------------
// bias field
// ---------------------------------------------------------------------------

namespace {

Tensor project_bias_value(const Tensor& phi, double alpha) {
    const double m = max_abs(add_scalar(phi, -1.0));
    if (m <= alpha) return phi;
    const double s = alpha / m;
    Tensor out(phi.shape());
    for (std::size_t i = 0; i < phi.numel(); ++i) {
        const double dev = std::clamp((phi[i] - 1.0) * s, -alpha, alpha);
        double v = 1.0 + dev;
        // 1.0 + dev can round outward; step back so the recovered deviation
        // v - 1.0 sits inside the band exactly
        while (std::abs(v - 1.0) > alpha) v = std::nextafter(v, 1.0);
        out[i] = v;
    }
    return out;
}

} // namespace

Var project_bias(Var phi, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("project_bias: alpha must lie in (0,1)");
    }
    if (phi.value().rank() != 2) throw ShapeError("project_bias: expected {H,W} field");
    const int ip = phi.id;
    // straight-through: the rescale is treated as identity in backward
    return phi.tape->record("project_bias", project_bias_value(phi.value(), alpha), {ip},
                            [ip](Tape& t, const Tensor& g) { t.accumulate(ip, g); });
}

Var realize_bias_field(Var log_grid, std::size_t h, std::size_t w, double alpha) {
    return project_bias(exp(bspline_upsample(log_grid, h, w)), alpha);
}

Var apply_bias(Var image, Var phi) {
    require_same_shape(image.value(), phi.value(), "apply_bias");
    return mul(image, phi);
}

// ---------------------------------------------------------------------------
// Gaussian smoothing
// ---------------------------------------------------------------------------

namespace {

Var smooth_plane(Var plane, const std::vector<double>& taps) {
    Tape& t = *plane.tape;
    const std::size_t n = taps.size();
    Var kx = t.constant(Tensor(Shape{1, n}, std::vector<double>(taps)));
    Var ky = t.constant(Tensor(Shape{n, 1}, std::vector<double>(taps)));
    return conv2d(conv2d(plane, kx, Padding::Replicate), ky, Padding::Replicate);
}

} // namespace

Var gaussian_smooth(Var field, double sigma) {
    if (sigma < 0.0) throw ConfigError("gaussian_smooth: sigma must be >= 0");
    if (sigma == 0.0) return field;
    const auto taps = kernels::gaussian_taps(sigma);
    const Tensor& f = field.value();
    if (f.rank() == 2) return smooth_plane(field, taps);
    if (f.rank() == 3 && f.extent(2) == 2) {
        auto [x, y] = split_field(field);
        return stack_field(smooth_plane(x, taps), smooth_plane(y, taps));
    }
    throw ShapeError("gaussian_smooth: expected {H,W} or {H,W,2}");
}

// ---------------------------------------------------------------------------
// stationary velocity fields
// ---------------------------------------------------------------------------

Tensor identity_grid(std::size_t h, std::size_t w) {
    Tensor g(Shape{h, w, 2});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            g[(y * w + x) * 2 + 0] = static_cast<double>(x);
            g[(y * w + x) * 2 + 1] = static_cast<double>(y);
        }
    }
    return g;
}

Var integrate_svf(Var velocity, int squaring_steps) {
    const Tensor& v = velocity.value();
    if (v.rank() != 3 || v.extent(2) != 2) {
        throw ShapeError("integrate_svf: expected {H,W,2} velocity");
    }
    if (squaring_steps < 1) throw ConfigError("integrate_svf: squaring steps must be >= 1");
    const std::size_t h = v.extent(0), w = v.extent(1);
    Tape& t = *velocity.tape;

    Tensor xs(Shape{h, w});
    Tensor ys(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            xs[y * w + x] = static_cast<double>(x);
            ys[y * w + x] = static_cast<double>(y);
        }
    }
    Var idx = t.constant(std::move(xs));
    Var idy = t.constant(std::move(ys));

    auto [dx, dy] = split_field(scale(velocity, std::ldexp(1.0, -squaring_steps)));
    for (int s = 0; s < squaring_steps; ++s) {
        Var coords = stack_field(add(dx, idx), add(dy, idy));
        dx = add(grid_sample(dx, coords), dx);
        dy = add(grid_sample(dy, coords), dy);
    }
    return stack_field(add(dx, idx), add(dy, idy));
}

Var realize_deformation(Var velocity, const MorphRegularization& reg) {
    Var phi = integrate_svf(velocity, reg.squaring_steps);
    if (reg.sigma_phi <= 0.0) return phi;
    const Tensor& v = velocity.value();
    Tape& t = *velocity.tape;
    Var idg = t.constant(identity_grid(v.extent(0), v.extent(1)));
    Var displacement = sub(phi, idg);
    return add(gaussian_smooth(displacement, reg.sigma_phi), idg);
}

Var warp(Var input, Var coords) { return grid_sample(input, coords); }

// ---------------------------------------------------------------------------
// plain-value counterparts
// ---------------------------------------------------------------------------

Tensor bspline_upsample(const Tensor& grid, std::size_t h, std::size_t w) {
    Tape t;
    return bspline_upsample(t.constant(grid), h, w).value();
}

BiasField realize_bias(const ControlGrid& grid, std::size_t h, std::size_t w) {
    Tape t;
    return BiasField{realize_bias_field(t.constant(grid.values), h, w, grid.alpha).value()};
}

Tensor apply_bias(const Tensor& image, const BiasField& field) {
    require_same_shape(image, field.phi, "apply_bias");
    return mul(image, field.phi);
}

Tensor gaussian_smooth(const Tensor& field, double sigma) {
    if (sigma == 0.0) return field;
    Tape t;
    return gaussian_smooth(t.constant(field), sigma).value();
}

DeformationField integrate_svf(const VelocityField& vf, int squaring_steps) {
    Tape t;
    return DeformationField{integrate_svf(t.constant(vf.v), squaring_steps).value()};
}

DeformationField realize_deformation(const VelocityField& vf, const MorphRegularization& reg) {
    Tape t;
    return DeformationField{realize_deformation(t.constant(vf.v), reg).value()};
}

Tensor warp_image(const Tensor& image, const DeformationField& def) {
    Tape t;
    return warp(t.constant(image), t.constant(def.phi_xy)).value();
}

Tensor warp_mask(const Tensor& mask, const DeformationField& def, std::size_t classes) {
    if (mask.rank() != 2) throw ShapeError("warp_mask: expected {H,W} mask");
    const std::size_t h = mask.extent(0), w = mask.extent(1), plane = h * w;
    if (classes == 0) throw ConfigError("warp_mask: classes must be >= 1");
    Tensor onehot(Shape{classes, h, w});
    for (std::size_t p = 0; p < plane; ++p) {
        const double lv = mask[p];
        if (lv != std::floor(lv) || lv < 0.0 || lv >= static_cast<double>(classes)) {
            throw Error("warp_mask: label out of range");
        }
        onehot[static_cast<std::size_t>(lv) * plane + p] = 1.0;
    }
    Tape t;
    const Tensor warped = warp(t.constant(std::move(onehot)), t.constant(def.phi_xy)).value();
    Tensor out(Shape{h, w});
    for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = 0;
        double bv = warped[p];
        for (std::size_t c = 1; c < classes; ++c) {
            if (warped[c * plane + p] > bv) {
                bv = warped[c * plane + p];
                best = c;
            }
        }
        out[p] = static_cast<double>(best);
    }
    return out;
}

DeformationField compose_deformations(const DeformationField& first,
                                      const DeformationField& second) {
    require_same_shape(first.phi_xy, second.phi_xy, "compose_deformations");
    Tape t;
    auto [sx, sy] = split_field(t.constant(second.phi_xy));
    Var coords = t.constant(first.phi_xy);
    return DeformationField{
        stack_field(grid_sample(sx, coords), grid_sample(sy, coords)).value()};
}

// ---------------------------------------------------------------------------
// stochastic constructors
// ---------------------------------------------------------------------------

ControlGrid random_bias_grid(Rng& rng, double alpha, std::size_t k) {
    const double bound = std::log1p(alpha);
    Tensor values(Shape{k, k});
    for (std::size_t i = 0; i < values.numel(); ++i) values[i] = rng.uniform(-bound, bound);
    return ControlGrid(std::move(values), alpha);
}

BiasField random_bias(Rng& rng, double alpha, std::size_t k, std::size_t h, std::size_t w) {
    return realize_bias(random_bias_grid(rng, alpha, k), h, w);
}

namespace {

double max_pixel_magnitude(const Tensor& v) {
    double m = 0.0;
    for (std::size_t p = 0, n = v.numel() / 2; p < n; ++p) {
        m = std::max(m, std::hypot(v[2 * p], v[2 * p + 1]));
    }
    return m;
}

} // namespace

VelocityField random_velocity(Rng& rng, double magnitude, double sigma,
                              std::size_t h, std::size_t w, double beta) {
    Tensor v(Shape{h, w, 2});
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] = rng.uniform(-1.0, 1.0);
    v = gaussian_smooth(v, sigma);
    const double m = max_pixel_magnitude(v);
    if (m > 0.0 && magnitude > 0.0) {
        v = scale(v, magnitude / m);
    } else if (magnitude == 0.0) {
        v = Tensor::zeros(v.shape());
    }
    return VelocityField{std::move(v), beta};
}

VelocityField project_velocity(const VelocityField& vf, double sigma_v) {
    Tensor v = sigma_v > 0.0 ? gaussian_smooth(vf.v, sigma_v) : vf.v;
    const double beta = vf.beta;
    if (beta <= 0.0) return VelocityField{Tensor::zeros(v.shape()), beta};
    const double m = max_pixel_magnitude(v);
    if (m > beta) v = scale(v, beta / m);
    // per-pixel clamp absorbs roundoff from the global rescale
    for (std::size_t p = 0, n = v.numel() / 2; p < n; ++p) {
        const double mag = std::hypot(v[2 * p], v[2 * p + 1]);
        if (mag > beta) {
            const double s = beta / mag;
            v[2 * p] *= s;
            v[2 * p + 1] *= s;
        }
    }
    return VelocityField{std::move(v), beta};
}

// ---------------------------------------------------------------------------
// random augmentation
// ---------------------------------------------------------------------------

Sample rand_augment(const Sample& sample, const RandAugConfig& cfg, Rng& rng) {
    cfg.validate();
    const Tensor& img = sample.image;
    if (img.rank() != 2) throw ShapeError("rand_augment: expected {H,W} image");
    const std::size_t h = img.extent(0), w = img.extent(1);

    // fixed draw order keeps the stream stable across configurations
    const bool flip_x = rng.uniform() < cfg.flip_x_prob;
    const bool flip_y = rng.uniform() < cfg.flip_y_prob;
    const double sc = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double rot = rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg) *
                       std::numbers::pi / 180.0;
    const double tx = rng.uniform(-cfg.translate_max, cfg.translate_max);
    const double ty = rng.uniform(-cfg.translate_max, cfg.translate_max);
    const double brightness = rng.uniform(-cfg.brightness_max, cfg.brightness_max);
    const double contrast = rng.uniform(-cfg.contrast_max, cfg.contrast_max);
    const bool elastic = cfg.elastic_magnitude > 0.0;

    Sample out = sample;
    const bool geometry = flip_x || flip_y || sc != 1.0 || rot != 0.0 ||
                          tx != 0.0 || ty != 0.0 || elastic;
    if (geometry) {
        Tensor disp;
        if (elastic) {
            disp = random_velocity(rng, cfg.elastic_magnitude, cfg.elastic_sigma, h, w,
                                   cfg.elastic_magnitude)
                       .v;
        }
        const double cx = 0.5 * static_cast<double>(w - 1);
        const double cy = 0.5 * static_cast<double>(h - 1);
        const double cosr = std::cos(rot), sinr = std::sin(rot);
        const double fx = flip_x ? -1.0 : 1.0;
        const double fy = flip_y ? -1.0 : 1.0;
        Tensor coords(Shape{h, w, 2});
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                // inverse map: output pixel -> source position
                const double qx = static_cast<double>(x) - cx - tx;
                const double qy = static_cast<double>(y) - cy - ty;
                const double rx = (cosr * qx + sinr * qy) / sc;
                const double ry = (-sinr * qx + cosr * qy) / sc;
                double px = fx * rx + cx;
                double py = fy * ry + cy;
                if (elastic) {
                    px += disp[(y * w + x) * 2 + 0];
                    py += disp[(y * w + x) * 2 + 1];
                }
                coords[(y * w + x) * 2 + 0] = px;
                coords[(y * w + x) * 2 + 1] = py;
            }
        }
        const DeformationField def{std::move(coords)};
        out.image = warp_image(out.image, def);
        if (out.mask) {
            const std::size_t classes =
                static_cast<std::size_t>(max_value(*out.mask)) + 1;
            out.mask = warp_mask(*out.mask, def, classes);
        }
    }
    if (brightness != 0.0 || contrast != 0.0) {
        Tensor& im = out.image;
        for (std::size_t i = 0; i < im.numel(); ++i) {
            im[i] = (im[i] - 0.5) * (1.0 + contrast) + 0.5 + brightness;
        }
        ensure_finite(im, "rand_augment intensity");
    }
    return out;
}

} // namespace advfield
