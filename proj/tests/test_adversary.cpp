#include <doctest.h>

#include <cmath>

#include "advfield/adversary.hpp"
#include "support.hpp"

using namespace advfield;
using testsupport::bitwise_equal;
using testsupport::random_tensor;

namespace {

SegNetConfig small_config() {
    SegNetConfig cfg;
    cfg.height = 16;
    cfg.width = 16;
    cfg.classes = 2;
    cfg.widths = {2, 4};
    cfg.seed = 3;
    return cfg;
}

SegNet constant_output_net() {
    SegNet net = SegNet::init(small_config());
    for (const char* name : {"head.weight", "head.bias"}) {
        Tensor& t = net.params()[net.param_index(name)];
        t = Tensor::zeros(t.shape());
    }
    return net;
}

AttackConfig small_attack() {
    AttackConfig cfg;
    cfg.steps = 1;
    cfg.step_size = 1.0;
    cfg.alpha = 0.3;
    cfg.beta = 2.0;
    cfg.w = 0.5;
    cfg.grid_k = 4;
    cfg.morph.squaring_steps = 4;
    cfg.seed = 17;
    return cfg;
}

} // namespace

TEST_SUITE("adversary") {

TEST_CASE("constant-output net: zero gradient is flagged, distance is zero") {
    const SegNet net = constant_output_net();
    Rng rng(5);
    const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);

    const BiasAttackResult bias = attack_bias(net, img, small_attack());
    CHECK(bias.zero_gradient);
    CHECK(bias.distance == doctest::Approx(0.0).epsilon(1e-12));

    const VatAttackResult vat = attack_vat(net, img, 1.0, 17);
    CHECK(vat.zero_gradient);
    CHECK(l2_norm(vat.noise) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("bias attack feasibility and determinism") {
    const SegNet net = SegNet::init(small_config());
    Rng rng(7);
    const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);
    const AttackConfig cfg = small_attack();

    const BiasAttackResult a = attack_bias(net, img, cfg);
    const BiasAttackResult b = attack_bias(net, img, cfg);
    CHECK_FALSE(a.zero_gradient);
    CHECK(bitwise_equal(a.grid.values, b.grid.values));
    CHECK(bitwise_equal(a.field.phi, b.field.phi));
    CHECK(a.distance == b.distance);

    CHECK(min_value(a.field.phi) > 0.0);
    CHECK(max_abs(add_scalar(a.field.phi, -1.0)) <= cfg.alpha);
    CHECK(bitwise_equal(a.adversarial, mul(img, a.field.phi)));

    AttackConfig other = cfg;
    other.seed = 18;
    const BiasAttackResult c = attack_bias(net, img, other);
    CHECK_FALSE(bitwise_equal(a.grid.values, c.grid.values));
}

TEST_CASE("bias attack ascends for small step sizes") {
    const SegNet net = SegNet::init(small_config());
    Rng rng(11);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);
        AttackConfig cfg = small_attack();
        cfg.steps = 1;
        cfg.step_size = 1e-3;
        cfg.seed = seed;
        const BiasAttackResult r = attack_bias(net, img, cfg);
        if (r.zero_gradient) continue;
        CHECK(r.distance >= r.initial_distance - 1e-8);
    }
}

TEST_CASE("morph attack: zero budget gives the identity and zero objective") {
    const SegNet net = SegNet::init(small_config());
    Rng rng(13);
    const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);
    AttackConfig cfg = small_attack();
    cfg.beta = 0.0;
    const MorphAttackResult r = attack_morph(net, img, cfg);
    CHECK(max_abs(r.velocity.v) == 0.0);
    CHECK(bitwise_equal(r.deformation.phi_xy, identity_grid(16, 16)));
    CHECK(bitwise_equal(r.adversarial, img));
    CHECK(r.distance == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("morph attack respects the velocity bound") {
    const SegNet net = SegNet::init(small_config());
    Rng rng(17);
    const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);
    AttackConfig cfg = small_attack();
    cfg.steps = 2;
    const MorphAttackResult r = attack_morph(net, img, cfg);
    for (std::size_t p = 0; p < 16 * 16; ++p) {
        CHECK(std::hypot(r.velocity.v[2 * p], r.velocity.v[2 * p + 1]) <= cfg.beta);
    }
    const MorphAttackResult again = attack_morph(net, img, cfg);
    CHECK(bitwise_equal(r.velocity.v, again.velocity.v));
}

TEST_CASE("vat noise has exactly the requested norm") {
    const SegNet net = SegNet::init(small_config());
    Rng rng(19);
    const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);
    for (double eps : {0.5, 1.0, 2.5}) {
        const VatAttackResult r = attack_vat(net, img, eps, 23);
        CHECK_FALSE(r.zero_gradient);
        CHECK(l2_norm(r.noise) == doctest::Approx(eps).epsilon(1e-9));
        CHECK(bitwise_equal(r.adversarial, add(img, r.noise)));
    }
    CHECK_THROWS_AS(attack_vat(net, img, 0.0, 23), ConfigError);
}

TEST_CASE("attacks never mutate the network") {
    const SegNet net = SegNet::init(small_config());
    const std::uint64_t before = net.checksum();
    Rng rng(23);
    const Tensor img = random_tensor(rng, {16, 16}, 0.0, 1.0);
    (void)attack_bias(net, img, small_attack());
    (void)attack_morph(net, img, small_attack());
    (void)attack_vat(net, img, 1.0, 29);
    CHECK(net.checksum() == before);
}

TEST_CASE("attack config validation") {
    AttackConfig cfg = small_attack();
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_attack();
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_attack();
    cfg.step_size = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    const SegNet net = SegNet::init(small_config());
    CHECK_THROWS_AS(attack_bias(net, Tensor(Shape{8, 8}), small_attack()), ShapeError);
}

} // TEST_SUITE
