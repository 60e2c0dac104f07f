#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "esdnet/common.hpp"
#include "esdnet/tensor.hpp"

// Synthetic screen-shot degradation: a per-channel sinusoidal scaling field
// multiplies the clean image, then a simple camera response (gamma, white
// balance, tone curve) distorts it. Clean images are procedural so training
// pairs need no external data.

namespace esdnet {

struct MoireParams {
  std::array<double, 3> amp{0.0, 0.0, 0.0};    // per-channel field amplitude, < 1
  double fx = 0.1;                             // cycles per pixel, horizontal
  double fy = 0.07;                            // cycles per pixel, vertical
  std::array<double, 3> phase{0.0, 0.0, 0.0};  // radians
  double gamma = 1.0;
  std::array<double, 3> gains{1.0, 1.0, 1.0};
  double tone_strength = 0.0;

  void validate() const {
    for (double a : amp)
      if (a < 0 || a >= 1)
        throw ContractError("moire amplitude must be in [0,1)");
    if (gamma <= 0) throw ContractError("moire gamma must be positive");
  }
};

// S_c(i,j) = 1 + a_c * cos(2*pi*(fx*j + fy*i) + phi_c), shape (1,3,h,w).
Tensor gen_scaling_field(const MoireParams& p, int h, int w);

// M = clamp(tone(gains * (clean * S)^gamma), 0, 1). Identity parameters
// (amp 0, gamma 1, gains 1, strength 0) reproduce the input bit-exactly.
Tensor apply_degradation(const Tensor& clean, const MoireParams& p);

// Procedural clean images, (1,3,h,w) in [0,1].
// gradient: per-channel corner-anchored ramps; checker: two-tone grid;
// textlike: dark glyph boxes on white; mixed: one of the above by seed.
Tensor gen_clean(const std::string& kind, int h, int w, std::uint64_t seed);

struct MoirePair {
  Tensor clean;
  Tensor moire;
  MoireParams params;
};

// Degradation parameters from the documented desk ranges.
MoireParams sample_params(Rng& rng);

// n independent pairs; each draws its own sub-seed, so inserting or removing
// pairs does not shift the others.
std::vector<MoirePair> gen_dataset(int n, int h, int w, std::uint64_t seed,
                                   const std::string& kind = "mixed");

}  // namespace esdnet
