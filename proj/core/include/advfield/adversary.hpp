#pragma once

#include <cstdint>

#include "advfield/segnet.hpp"
#include "advfield/transforms.hpp"

namespace advfield {

// Projected gradient ascent settings shared by the attack constructions.
// None of the attacks reads ground-truth labels; they compare the network
// against its own clean prediction.
struct AttackConfig {
    int steps = 1;          // ascent iterations (n)
    double step_size = 1.0; // xi
    double alpha = 0.3;     // bias-field bound on |phi-1|
    double beta = 2.0;      // per-pixel velocity magnitude bound (pixels)
    double epsilon = 1.0;   // pixel-noise norm
    double w = 0.5;         // contour weight inside the composite distance
    std::size_t grid_k = 4; // control points per axis
    double init_range = 0.05; // log-space init bound for control points
    MorphRegularization morph{};
    std::uint64_t seed = 0;

    void validate() const;
};

struct BiasAttackResult {
    ControlGrid grid;
    BiasField field;
    Tensor adversarial;      // image * phi
    double distance;         // composite distance at the returned field
    double initial_distance; // distance at the random initialization
    bool zero_gradient = false;
};

struct MorphAttackResult {
    VelocityField velocity;
    DeformationField deformation;
    Tensor adversarial;      // warped image
    double distance;         // equivariance gap at the returned velocity
    double initial_distance; // gap at the projected random initialization
    bool zero_gradient = false;
};

struct VatAttackResult {
    Tensor noise;       // Euclidean norm epsilon
    Tensor adversarial; // image + noise
    double distance;    // KL at the returned noise
    bool zero_gradient = false;
};

// Ascends the composite distance between the clean prediction and the
// prediction under a control-point bias field; the realized field is
// projected onto the alpha bound at every iterate. When the gradient norm
// vanishes the random initialization is returned flagged.
// p_clean optionally reuses a precomputed clean probability map.
BiasAttackResult attack_bias(const SegNet& net, const Tensor& image,
                             const AttackConfig& cfg, const Tensor* p_clean = nullptr);

// Ascends the equivariance gap between the warped clean prediction and the
// prediction of the warped image; velocity iterates are smoothed and
// rescaled onto the beta ball.
MorphAttackResult attack_morph(const SegNet& net, const Tensor& image,
                               const AttackConfig& cfg, const Tensor* p_clean = nullptr);

// Single-step pixel-noise baseline: gradient of KL at a random unit
// direction, rescaled to norm epsilon.
VatAttackResult attack_vat(const SegNet& net, const Tensor& image, double epsilon,
                           std::uint64_t seed, const Tensor* p_clean = nullptr);

} // namespace advfield
