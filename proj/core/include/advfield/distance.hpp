#pragma once

#include <vector>

#include "advfield/tape.hpp"

namespace advfield {

// Per-pixel class probabilities {C,H,W}; every pixel's channel vector sums
// to 1 within 1e-9.
struct ProbMap {
    Tensor p;

    explicit ProbMap(Tensor p_);
    std::size_t classes() const { return p.extent(0); }
    std::size_t height() const { return p.extent(1); }
    std::size_t width() const { return p.extent(2); }
    // Hard segmentation: per-pixel argmax channel as a {H,W} label mask.
    Tensor argmax_mask() const;
};

// Epsilon inside the logs; keeps saturated softmax outputs finite.
inline constexpr double kDistanceEpsilon = 1e-8;

// Mean over pixels of sum_c p * log((p+eps)/(phat+eps)). Zero iff equal.
Var kl_divergence(Var p, Var phat);

// For every foreground channel and each of the two 3x3 Sobel filters
// (zero padding), the Euclidean norm of the edge-map difference, summed.
Var contour_distance(Var p, Var phat, const std::vector<std::size_t>& foreground);

// KL + w * contour. With w = 0 this is exactly the KL term.
Var composite_distance(Var p, Var phat, double w,
                       const std::vector<std::size_t>& foreground);

double kl_divergence(const ProbMap& p, const ProbMap& phat);
double contour_distance(const ProbMap& p, const ProbMap& phat,
                        const std::vector<std::size_t>& foreground);
double composite_distance(const ProbMap& p, const ProbMap& phat, double w,
                          const std::vector<std::size_t>& foreground);

// All channels except 0 (background-first convention).
std::vector<std::size_t> default_foreground(std::size_t classes);

} // namespace advfield
