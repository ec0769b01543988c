#pragma once

#include <functional>
#include <span>
#include <vector>

#include "advfield/tensor.hpp"

namespace advfield::kernels {
enum class Padding; // see src/kernels.hpp
}

namespace advfield {

enum class Padding { Zero, Replicate };

class Tape;

// Handle to a node of one tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Shape& shape() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode differentiation tape. A tape records one forward pass; nodes
// are appended in evaluation order, so reverse index order is a topological
// order for backward. Tapes are meant to be built, differentiated once and
// discarded. Tensors held by nodes are immutable once recorded.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable input; a legal backward target.
    Var leaf(Tensor value);
    // Input that never receives gradient (frozen parameters, detached
    // predictions, fixed kernels).
    Var constant(Tensor value);

    // Gradient of a scalar loss with respect to the given leaf targets.
    // Returns one tensor per target, each shaped like its leaf; targets the
    // loss does not depend on come back as zeros. Only the subgraph between
    // the loss and the requested leaves is traversed.
    std::vector<Tensor> backward(Var loss, std::span<const Var> targets);
    Tensor backward(Var loss, Var target);

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    // --- recording API used by the op functions ---
    using BackFn = std::function<void(Tape&, const Tensor& g)>;
    Var record(const char* op, Tensor value, std::vector<int> parents, BackFn back);
    // Adds a gradient contribution to a node; no-op for nodes that cannot
    // reach a requested target.
    void accumulate(int id, Tensor g);
    // True if the node can reach a requested target (valid during backward);
    // lets ops skip gradient pieces nobody asked for.
    bool wants(int id) const;

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        BackFn back; // empty for leaves and constants
        bool is_constant = false;
    };
    std::vector<Node> nodes_;
    std::vector<char> needed_;
    std::vector<Tensor> grads_;
    std::vector<char> has_grad_;
};

inline const Tensor& Var::value() const { return tape->value_of(id); }
inline const Shape& Var::shape() const { return tape->value_of(id).shape(); }

// --- elementwise / scalar ---
// Binary ops require equal shapes, except that either side may be a
// single-element tensor (scalar broadcast).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a); // d/dx at 0 taken as 0
Var relu(Var a);

// --- reductions / shape ---
Var sum(Var a);
Var mean(Var a);
Var reshape(Var a, Shape shape);

// --- structured ops ---
// Same-padding 2-D correlation. Kernel forms:
//   {kh,kw} applied per plane of a {H,W} or {C,H,W} input;
//   {Cout,Cin,kh,kw} with a {Cin,H,W} input -> {Cout,H,W}.
// Kernel extents must be odd.
Var conv2d(Var input, Var kernel, Padding pad);
Var bias_add(Var input, Var bias);           // {C,H,W} + {C}
Var maxpool2(Var input);                     // {C,H,W} or {H,W}, extents even
Var upsample2(Var input);                    // nearest-neighbour 2x
Var concat_channels(Var a, Var b);           // {Ca,H,W} + {Cb,H,W}
Var channel(Var input, std::size_t c);       // slice {C,H,W} -> {H,W}
Var softmax_channels(Var logits);            // per-pixel softmax over C
// Mean over pixels of -log p[label]; labels is a {H,W} tensor of integral
// class ids in [0, C).
Var cross_entropy(Var probmap, const Tensor& labels);

// Bilinear sampling of {H,W} or {C,H,W} input at absolute coordinates
// {H,W,2} (component 0 = x, 1 = y), replicate boundary. Differentiable in
// both the sampled values and the coordinates.
Var grid_sample(Var input, Var coords);

// {H,W,2} <-> two {H,W} planes.
std::pair<Var, Var> split_field(Var field);
Var stack_field(Var x, Var y);

} // namespace advfield
