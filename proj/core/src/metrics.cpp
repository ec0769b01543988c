#include "advfield/metrics.hpp"

namespace advfield {

double dice(const Tensor& prediction, const Tensor& reference, std::size_t cls) {
    require_same_shape(prediction, reference, "dice");
    const double c = static_cast<double>(cls);
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < prediction.numel(); ++i) {
        const bool in_a = prediction[i] == c;
        const bool in_b = reference[i] == c;
        a += in_a;
        b += in_b;
        both += in_a && in_b;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double mean_foreground_dice(const Tensor& prediction, const Tensor& reference,
                            std::size_t classes) {
    if (classes < 2) throw ConfigError("mean_foreground_dice: need at least 2 classes");
    double total = 0.0;
    for (std::size_t c = 1; c < classes; ++c) total += dice(prediction, reference, c);
    return total / static_cast<double>(classes - 1);
}

} // namespace advfield
