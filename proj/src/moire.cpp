#include "esdnet/moire.hpp"

#include <cmath>

namespace esdnet {

Tensor gen_scaling_field(const MoireParams& p, int h, int w) {
  p.validate();
  if (h < 1 || w < 1) throw ContractError("scaling field extents must be >= 1");
  Tensor s({1, 3, h, w});
  const double tau = 2.0 * 3.14159265358979323846;
  for (int c = 0; c < 3; ++c) {
    const double a = p.amp[std::size_t(c)];
    const double phi = p.phase[std::size_t(c)];
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        s.at(0, c, i, j) =
            float(1.0 + a * std::cos(tau * (p.fx * j + p.fy * i) + phi));
  }
  return s;
}

namespace {

inline float tone_curve(float x, float strength) {
  return x + strength * 4.0f * x * (1.0f - x) * (0.5f - x);
}

}  // namespace

Tensor apply_degradation(const Tensor& clean, const MoireParams& p) {
  p.validate();
  if (clean.rank() != 4 || clean.c() != 3)
    throw ContractError("apply_degradation: input must be N,3,h,w, got " +
                        shape_str(clean));
  const int N = clean.n(), H = clean.h(), W = clean.w();
  const bool any_amp =
      p.amp[0] != 0.0 || p.amp[1] != 0.0 || p.amp[2] != 0.0;
  const double tau = 2.0 * 3.14159265358979323846;
  const float strength = float(p.tone_strength);

  Tensor out = clean;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < 3; ++c) {
      const double a = p.amp[std::size_t(c)];
      const double phi = p.phase[std::size_t(c)];
      const float gain = float(p.gains[std::size_t(c)]);
      for (int i = 0; i < H; ++i) {
        float* row = &out.at(n, c, i, 0);
        for (int j = 0; j < W; ++j) {
          float v = row[j];
          if (any_amp)
            v *= float(1.0 + a * std::cos(tau * (p.fx * j + p.fy * i) + phi));
          if (p.gamma != 1.0) v = std::pow(std::max(v, 0.0f), float(p.gamma));
          if (gain != 1.0f) v *= gain;
          if (strength != 0.0f) v = tone_curve(v, strength);
          row[j] = std::min(1.0f, std::max(0.0f, v));
        }
      }
    }
  return out;
}

namespace {

Tensor clean_gradient(int h, int w, Rng& rng) {
  Tensor img({1, 3, h, w});
  const double dy = h > 1 ? 1.0 / (h - 1) : 0.0;
  const double dx = w > 1 ? 1.0 / (w - 1) : 0.0;
  for (int c = 0; c < 3; ++c) {
    // Corner anchors are exact: (0,0) -> 0 and (h-1,w-1) -> 1 for any mix.
    const double t = rng.uniform(0.25, 0.75);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        img.at(0, c, i, j) = float((1.0 - t) * (i * dy) + t * (j * dx));
  }
  if (h > 1 && w > 1)
    for (int c = 0; c < 3; ++c) img.at(0, c, h - 1, w - 1) = 1.0f;
  return img;
}

Tensor clean_checker(int h, int w, Rng& rng) {
  Tensor img({1, 3, h, w});
  const int cell = 4 + int(rng.uniform_int(13));
  const float lo = float(rng.uniform(0.0, 0.35));
  const float hi = float(rng.uniform(0.65, 1.0));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const float v = ((i / cell + j / cell) % 2 == 0) ? lo : hi;
      for (int c = 0; c < 3; ++c) img.at(0, c, i, j) = v;
    }
  return img;
}

Tensor clean_textlike(int h, int w, Rng& rng) {
  Tensor img = Tensor::full({1, 3, h, w}, 1.0f);
  const int line_h = 5 + int(rng.uniform_int(6));
  const int gap = 3 + int(rng.uniform_int(4));
  for (int top = gap; top + line_h <= h; top += line_h + gap) {
    int x = 1 + int(rng.uniform_int(5));
    while (x < w - 2) {
      const int glyph = 2 + int(rng.uniform_int(9));
      const int x1 = std::min(w - 1, x + glyph);
      const float ink = float(rng.uniform(0.0, 0.15));
      for (int i = top; i < top + line_h; ++i)
        for (int j = x; j < x1; ++j)
          for (int c = 0; c < 3; ++c) img.at(0, c, i, j) = ink;
      x = x1 + 1 + int(rng.uniform_int(4));
    }
  }
  return img;
}

}  // namespace

Tensor gen_clean(const std::string& kind, int h, int w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw ContractError("gen_clean extents must be >= 1");
  Rng rng(seed);
  if (kind == "gradient") return clean_gradient(h, w, rng);
  if (kind == "checker") return clean_checker(h, w, rng);
  if (kind == "textlike") return clean_textlike(h, w, rng);
  if (kind == "mixed") {
    switch (rng.uniform_int(3)) {
      case 0: return clean_gradient(h, w, rng);
      case 1: return clean_checker(h, w, rng);
      default: return clean_textlike(h, w, rng);
    }
  }
  throw ContractError("unknown clean image kind '" + kind +
                      "' (expected gradient, checker, textlike or mixed)");
}

MoireParams sample_params(Rng& rng) {
  MoireParams p;
  for (int c = 0; c < 3; ++c) {
    p.amp[std::size_t(c)] = rng.uniform(0.1, 0.6);
    p.phase[std::size_t(c)] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    p.gains[std::size_t(c)] = rng.uniform(0.9, 1.1);
  }
  const double freq = rng.uniform(0.02, 0.45);
  const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  p.fx = freq * std::cos(theta);
  p.fy = freq * std::sin(theta);
  p.gamma = rng.uniform(0.8, 1.4);
  p.tone_strength = rng.uniform(0.0, 0.5);
  return p;
}

std::vector<MoirePair> gen_dataset(int n, int h, int w, std::uint64_t seed,
                                   const std::string& kind) {
  if (n < 1) throw ContractError("gen_dataset: n must be >= 1");
  std::vector<MoirePair> pairs;
  pairs.reserve(std::size_t(n));
  for (int k = 0; k < n; ++k) {
    const std::uint64_t sub = Rng::mix(seed, std::uint64_t(k));
    MoirePair pair;
    pair.clean = gen_clean(kind, h, w, Rng::mix(sub, 1));
    Rng prng(Rng::mix(sub, 2));
    pair.params = sample_params(prng);
    pair.moire = apply_degradation(pair.clean, pair.params);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace esdnet
