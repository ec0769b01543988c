#include "advfield/adversary.hpp"

#include <cmath>

#include "advfield/rng.hpp"

namespace advfield {

void AttackConfig::validate() const {
    if (steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (!(step_size > 0.0)) throw ConfigError("attack: step size must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("attack: alpha must lie in (0,1)");
    if (beta < 0.0) throw ConfigError("attack: beta must be >= 0");
    if (!(epsilon > 0.0)) throw ConfigError("attack: epsilon must be positive");
    if (w < 0.0) throw ConfigError("attack: composite weight must be >= 0");
    if (grid_k < 2) throw ConfigError("attack: grid size must be >= 2");
}

namespace {

Tensor clean_prediction(const SegNet& net, const Tensor& image, const Tensor* p_clean) {
    if (p_clean) return *p_clean;
    return net.predict(image).p;
}

void check_attack_image(const SegNet& net, const Tensor& image) {
    if (image.rank() != 2 || image.extent(0) != net.config().height ||
        image.extent(1) != net.config().width) {
        throw ShapeError("attack: image extents do not match the network");
    }
}

} // namespace

BiasAttackResult attack_bias(const SegNet& net, const Tensor& image,
                             const AttackConfig& cfg, const Tensor* p_clean) {
    cfg.validate();
    check_attack_image(net, image);
    const std::size_t h = image.extent(0), w = image.extent(1);
    const auto fg = default_foreground(net.config().classes);
    const Tensor target = clean_prediction(net, image, p_clean);

    Rng rng(cfg.seed);
    Tensor c(Shape{cfg.grid_k, cfg.grid_k});
    for (std::size_t i = 0; i < c.numel(); ++i) {
        c[i] = rng.uniform(-cfg.init_range, cfg.init_range);
    }

    bool zero_gradient = false;
    double initial_distance = 0.0;
    for (int step = 0; step < cfg.steps; ++step) {
        Tape tape;
        Var c_leaf = tape.leaf(c);
        Var phi = realize_bias_field(c_leaf, h, w, cfg.alpha);
        Var adv = apply_bias(tape.constant(image), phi);
        Var phat = net.forward_frozen(tape, adv);
        Var dist = composite_distance(tape.constant(target), phat, cfg.w, fg);
        if (step == 0) initial_distance = dist.value().item();
        const Tensor grad = tape.backward(dist, c_leaf);
        const double gn = l2_norm(grad);
        if (gn == 0.0) {
            zero_gradient = true;
            break;
        }
        c = add(c, scale(grad, cfg.step_size / gn));
    }

    ControlGrid grid(std::move(c), cfg.alpha);
    BiasField field = realize_bias(grid, h, w);
    Tensor adversarial = apply_bias(image, field);
    const double distance = composite_distance(
        ProbMap(target), net.predict(adversarial), cfg.w, fg);
    return BiasAttackResult{std::move(grid), std::move(field), std::move(adversarial),
                            distance, initial_distance, zero_gradient};
}

MorphAttackResult attack_morph(const SegNet& net, const Tensor& image,
                               const AttackConfig& cfg, const Tensor* p_clean) {
    cfg.validate();
    check_attack_image(net, image);
    const std::size_t h = image.extent(0), w = image.extent(1);
    const auto fg = default_foreground(net.config().classes);
    const Tensor target = clean_prediction(net, image, p_clean);

    Rng rng(cfg.seed);
    Tensor v0(Shape{h, w, 2});
    for (std::size_t i = 0; i < v0.numel(); ++i) v0[i] = rng.uniform(-0.5, 0.5);
    VelocityField velocity = project_velocity(VelocityField{std::move(v0), cfg.beta},
                                              cfg.morph.sigma_v);

    bool zero_gradient = false;
    double initial_distance = 0.0;
    for (int step = 0; step < cfg.steps; ++step) {
        Tape tape;
        Var v_leaf = tape.leaf(velocity.v);
        Var phi = realize_deformation(v_leaf, cfg.morph);
        Var warped_target = warp(tape.constant(target), phi);
        Var adv = warp(tape.constant(image), phi);
        Var phat = net.forward_frozen(tape, adv);
        Var gap = composite_distance(warped_target, phat, cfg.w, fg);
        if (step == 0) initial_distance = gap.value().item();
        const Tensor grad = tape.backward(gap, v_leaf);
        const double gn = l2_norm(grad);
        if (gn == 0.0) {
            zero_gradient = true;
            break;
        }
        velocity.v = add(velocity.v, scale(grad, cfg.step_size / gn));
        velocity = project_velocity(velocity, cfg.morph.sigma_v);
    }

    DeformationField deformation = realize_deformation(velocity, cfg.morph);
    Tensor adversarial = warp_image(image, deformation);
    const Tensor warped_target = warp_image(target, deformation);
    const double distance = composite_distance(
        ProbMap(warped_target), net.predict(adversarial), cfg.w, fg);
    return MorphAttackResult{std::move(velocity), std::move(deformation),
                             std::move(adversarial), distance, initial_distance,
                             zero_gradient};
}

VatAttackResult attack_vat(const SegNet& net, const Tensor& image, double epsilon,
                           std::uint64_t seed, const Tensor* p_clean) {
    if (!(epsilon > 0.0)) throw ConfigError("attack_vat: epsilon must be positive");
    check_attack_image(net, image);
    const Tensor target = clean_prediction(net, image, p_clean);

    Rng rng(seed);
    Tensor r(image.shape());
    double norm = 0.0;
    while (norm == 0.0) {
        for (std::size_t i = 0; i < r.numel(); ++i) r[i] = rng.normal();
        norm = l2_norm(r);
    }
    r = scale(r, 1.0 / norm);

    Tape tape;
    Var r_leaf = tape.leaf(r);
    Var adv = add(tape.constant(image), r_leaf);
    Var phat = net.forward_frozen(tape, adv);
    Var dist = kl_divergence(tape.constant(target), phat);
    const Tensor grad = tape.backward(dist, r_leaf);
    const double gn = l2_norm(grad);

    bool zero_gradient = false;
    Tensor noise;
    if (gn == 0.0) {
        zero_gradient = true;
        noise = scale(r, epsilon); // random unit direction, scaled to the budget
    } else {
        noise = scale(grad, epsilon / gn);
    }
    Tensor adversarial = add(image, noise);
    const double distance =
        kl_divergence(ProbMap(target), net.predict(adversarial));
    return VatAttackResult{std::move(noise), std::move(adversarial), distance,
                           zero_gradient};
}

} // namespace advfield
