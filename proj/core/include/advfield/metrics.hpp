#pragma once

#include "advfield/tensor.hpp"

namespace advfield {

// Overlap 2|A∩B| / (|A|+|B|) of one class between two label masks.
// Two empty masks agree perfectly and score 1.
double dice(const Tensor& prediction, const Tensor& reference, std::size_t cls);

// Mean dice over classes 1..C-1 (background-first convention).
double mean_foreground_dice(const Tensor& prediction, const Tensor& reference,
                            std::size_t classes);

} // namespace advfield
