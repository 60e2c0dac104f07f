#pragma once

#include <string>

#include "esdnet/tensor.hpp"

// PNG round-trip for (1,3,H,W) tensors in [0,1]. Only 8-bit RGB and RGBA
// files are accepted; alpha is dropped on load. Saving clamps, quantizes
// with round-half-up and replaces the target atomically.

namespace esdnet {

Tensor load_png(const std::string& path);

void save_png(const std::string& path, const Tensor& img);

}  // namespace esdnet
