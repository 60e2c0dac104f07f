#include "esdnet/model.hpp"

#include <cmath>
#include <set>

#include "esdnet/common.hpp"

namespace esdnet {

void ModelConfig::validate() const {
  static const std::set<std::string> variants{"standard", "large", "weight_shared"};
  if (!variants.count(variant))
    throw ContractError("unknown model variant '" + variant +
                        "' (expected standard, large or weight_shared)");
  if (width_div < 1)
    throw ContractError("width_div must be >= 1");
  if (48 % width_div != 0 || 32 % width_div != 0 || 64 % width_div != 0)
    throw ContractError("width_div must divide 32, 48 and 64");
  for (int c : {head_width(), level_width(2), level_width(3), dec_width()}) {
    if ((3 * c) % 4 != 0)
      throw ContractError("width_div leaves a channel width whose squeezed "
                          "attention layer is not an integer");
  }
}

namespace {

using DefSink = std::function<void(const std::string&, std::vector<int>, int)>;

void conv_def(const DefSink& sink, const std::string& name, int co, int ci,
              int k) {
  sink(name + ".w", {co, ci, k, k}, ci * k * k);
  sink(name + ".b", {co}, 0);
}

void affine_def(const DefSink& sink, const std::string& name, int co, int ci) {
  sink(name + ".w", {co, ci}, ci);
  sink(name + ".b", {co}, 0);
}

void cascade_defs(const DefSink& sink, const std::string& prefix, int c,
                  int growth, int layers) {
  for (int l = 1; l <= layers; ++l)
    conv_def(sink, prefix + ".layer" + std::to_string(l), growth,
             c + (l - 1) * growth, 3);
  conv_def(sink, prefix + ".proj", c, c + layers * growth, 1);
}

void sam_defs(const DefSink& sink, const std::string& prefix, int c,
              int growth, bool shared) {
  if (shared) {
    cascade_defs(sink, prefix + ".branch", c, growth, 5);
  } else {
    for (int b = 1; b <= 3; ++b)
      cascade_defs(sink, prefix + ".branch" + std::to_string(b), c, growth, 5);
  }
  const int mid = 3 * c / 4;
  affine_def(sink, prefix + ".mlp.fc1", mid, 3 * c);
  affine_def(sink, prefix + ".mlp.fc2", mid, mid);
  affine_def(sink, prefix + ".mlp.fc3", 3 * c, mid);
}

void level_defs(const DefSink& sink, const ModelConfig& cfg,
                const std::string& prefix, int c) {
  cascade_defs(sink, prefix + ".drdb", c, cfg.growth(), 3);
  for (int s = 1; s <= cfg.sam_count(); ++s)
    sam_defs(sink, prefix + ".sam" + std::to_string(s), c, cfg.growth(),
             cfg.shared_branches());
}

void walk_defs(const ModelConfig& cfg, const DefSink& sink) {
  conv_def(sink, "head.conv", cfg.head_width(), 12, 5);
  level_defs(sink, cfg, "enc1", cfg.level_width(1));
  conv_def(sink, "down1", cfg.level_width(2), cfg.level_width(1), 3);
  level_defs(sink, cfg, "enc2", cfg.level_width(2));
  conv_def(sink, "down2", cfg.level_width(3), cfg.level_width(2), 3);
  level_defs(sink, cfg, "enc3", cfg.level_width(3));

  const int dw = cfg.dec_width();
  const int fuse_in[3] = {cfg.level_width(3), dw + cfg.level_width(2),
                          dw + cfg.level_width(1)};
  for (int li = 0; li < 3; ++li) {
    const std::string prefix = "dec" + std::to_string(3 - li);
    conv_def(sink, prefix + ".fuse", dw, fuse_in[li], 3);
    level_defs(sink, cfg, prefix, dw);
    conv_def(sink, prefix + ".out", 12, dw, 3);
  }
}

}  // namespace

std::vector<ParamDef> param_defs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamDef> defs;
  walk_defs(cfg, [&](const std::string& name, std::vector<int> shape, int fan) {
    defs.push_back({name, std::move(shape), fan});
  });
  return defs;
}

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  Model m;
  m.cfg = cfg;
  Rng rng(seed);
  for (const ParamDef& def : param_defs(cfg)) {
    Tensor t(def.shape);
    if (def.fan_in > 0) {
      // Kaiming-uniform with the framework-default leaky slope sqrt(5):
      // sqrt(6 / ((1 + 5) * fan_in)). The relu-gain bound sqrt(6 / fan_in)
      // compounds through the residual blocks and pushes initial outputs
      // three orders of magnitude past image scale.
      const double bound = 1.0 / std::sqrt(double(def.fan_in));
      for (float& v : t.data) v = float(rng.uniform(-bound, bound));
    }
    m.names.push_back(def.name);
    m.values.push_back(std::move(t));
  }
  m.rebuild_index();
  return m;
}

void Model::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < names.size(); ++i)
    index_[names[i]] = int(i);
}

std::int64_t Model::param_count() const {
  std::int64_t n = 0;
  for (const Tensor& v : values) n += v.numel();
  return n;
}

Tensor Model::infer(const Tensor& x) const {
  TapeF tape;
  const std::vector<int> pids = bind(tape, false);
  const int in = tape.constant(x);
  const ForwardIds out = forward(tape, pids, in);
  return tape.val(out.pred[0]);
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i >= n) i = period - i;
  return i;
}

Tensor reflect_pad(const Tensor& x, int ph, int pw) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
  Tensor out({N, C, ph, pw});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < ph; ++y) {
        const int sy = reflect_index(y, H);
        const float* src = &x.at(n, c, sy, 0);
        float* dst = &out.at(n, c, y, 0);
        for (int xx = 0; xx < pw; ++xx) dst[xx] = src[reflect_index(xx, W)];
      }
  return out;
}

Tensor crop_tl(const Tensor& x, int h, int w) {
  if (x.h() == h && x.w() == w) return x;
  const int N = x.n(), C = x.c();
  Tensor out({N, C, h, w});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y)
        std::copy(&x.at(n, c, y, 0), &x.at(n, c, y, 0) + w, &out.at(n, c, y, 0));
  return out;
}

// Tile starts covering [0, extent) with the given step; the final start is
// pulled back so the last tile ends exactly at the boundary.
std::vector<int> tile_starts(int extent, int tile, int step) {
  std::vector<int> starts;
  for (int s = 0;; s += step) {
    const int clamped = std::min(s, extent - tile);
    if (starts.empty() || clamped > starts.back()) starts.push_back(clamped);
    if (clamped + tile >= extent) break;
  }
  return starts;
}

std::vector<float> feather_profile(int tile, int overlap) {
  std::vector<float> w(static_cast<std::size_t>(tile));
  for (int e = 0; e < tile; ++e) {
    const int edge = std::min(e + 1, tile - e);
    w[std::size_t(e)] = std::min(1.0f, float(edge) / float(overlap + 1));
  }
  return w;
}

}  // namespace

Tensor Model::tiled_infer(const Tensor& x, int tile, int overlap) const {
  if (x.rank() != 4 || x.c() != 3)
    throw ContractError("tiled_infer: input must be N,3,H,W, got " + shape_str(x));
  if (tile < 16 || tile % 16 != 0)
    throw ContractError("tiled_infer: tile must be a positive multiple of 16");
  if (overlap < 0 || overlap > tile / 2)
    throw ContractError("tiled_infer: overlap must be in [0, tile/2]");

  const int N = x.n(), H = x.h(), W = x.w();
  const int ph = (H + 15) / 16 * 16;
  const int pw = (W + 15) / 16 * 16;
  const Tensor padded = (ph == H && pw == W) ? x : reflect_pad(x, ph, pw);

  if (ph <= tile && pw <= tile) return crop_tl(infer(padded), H, W);

  const int th = std::min(tile, ph);
  const int tw = std::min(tile, pw);
  const std::vector<int> ys = tile_starts(ph, th, th - overlap);
  const std::vector<int> xs = tile_starts(pw, tw, tw - overlap);
  const std::vector<float> wy = feather_profile(th, overlap);
  const std::vector<float> wx = feather_profile(tw, overlap);

  Tensor acc({N, 3, ph, pw});
  Tensor wsum({N, 1, ph, pw});
  Tensor patch({N, 3, th, tw});
  for (int ty : ys)
    for (int tx : xs) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < th; ++y)
            std::copy(&padded.at(n, c, ty + y, tx),
                      &padded.at(n, c, ty + y, tx) + tw, &patch.at(n, c, y, 0));
      const Tensor restored = infer(patch);
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < th; ++y) {
            const float* src = &restored.at(n, c, y, 0);
            float* dst = &acc.at(n, c, ty + y, tx);
            const float fy = wy[std::size_t(y)];
            for (int xx = 0; xx < tw; ++xx)
              dst[xx] += src[xx] * fy * wx[std::size_t(xx)];
          }
        for (int y = 0; y < th; ++y) {
          float* dst = &wsum.at(n, 0, ty + y, tx);
          const float fy = wy[std::size_t(y)];
          for (int xx = 0; xx < tw; ++xx) dst[xx] += fy * wx[std::size_t(xx)];
        }
      }
    }
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < 3; ++c) {
      float* v = &acc.at(n, c, 0, 0);
      const float* w = &wsum.at(n, 0, 0, 0);
      const std::int64_t plane = std::int64_t(ph) * pw;
      for (std::int64_t i = 0; i < plane; ++i) v[i] /= w[i];
    }
  return crop_tl(acc, H, W);
}

}  // namespace esdnet
