#pragma once

#include <map>
#include <optional>
#include <string>

#include "advfield/tensor.hpp"

namespace advfield {

// One dataset element: a {H,W} image in [0,1] plus, for labelled samples, a
// {H,W} mask of integral class ids. Unlabelled samples have no mask at all,
// so label-free code paths are label-free by construction.
struct Sample {
    Tensor image;
    std::optional<Tensor> mask;
    std::string id;
    std::map<std::string, std::string> meta;

    bool labelled() const { return mask.has_value(); }
};

} // namespace advfield
