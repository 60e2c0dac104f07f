#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "esdnet/graph.hpp"
#include "esdnet/tensor.hpp"

// Multi-scale demoireing network. A pixel-shuffle head halves the input,
// three encoder levels at 1/2, 1/4 and 1/8 resolution stack a dilated
// residual dense block and one or two pyramid attention modules each, and
// the decoder emits a prediction at every level while feeding upsampled
// features back in through skip connections.

namespace esdnet {

struct ModelConfig {
  // "standard": one attention module per level.
  // "large": two attention modules per level.
  // "weight_shared": one module whose three pyramid branches share weights.
  std::string variant = "standard";

  // Divides every channel width; handy for quick training runs on small
  // machines. 1 is the full-size network.
  int width_div = 1;

  int sam_count() const { return variant == "large" ? 2 : 1; }
  bool shared_branches() const { return variant == "weight_shared"; }

  int head_width() const { return 48 / width_div; }
  int level_width(int level) const { return (48 << (level - 1)) / width_div; }
  int growth() const { return 32 / width_div; }
  int dec_width() const { return 64 / width_div; }

  void validate() const;
};

struct ParamDef {
  std::string name;
  std::vector<int> shape;
  int fan_in;  // 0 marks a bias, which is zero-initialized
};

// One entry per parameter tensor, in a fixed order shared by init, weight
// files and the optimizer state.
std::vector<ParamDef> param_defs(const ModelConfig& cfg);

// Prediction node ids per scale: pred[0] at full resolution, pred[1] at
// 1/2, pred[2] at 1/4.
struct ForwardIds {
  std::array<int, 3> pred;
};

using TraceSink =
    std::function<void(const std::string&, const std::vector<int>&)>;

class Model {
 public:
  ModelConfig cfg;
  std::vector<std::string> names;
  std::vector<Tensor> values;

  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  std::int64_t param_count() const;

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractError("unknown parameter " + name);
    return it->second;
  }

  void rebuild_index();

  // Registers every parameter on the tape, as gradient leaves when
  // trainable, and returns ids aligned with names/values.
  template <class T>
  std::vector<int> bind(Tape<T>& tape, bool trainable) const {
    std::vector<int> ids;
    ids.reserve(values.size());
    for (const Tensor& v : values) {
      if constexpr (std::is_same_v<T, float>)
        ids.push_back(tape.leaf(v, trainable));
      else
        ids.push_back(tape.leaf(v.template cast<T>(), trainable));
    }
    return ids;
  }

  template <class T>
  ForwardIds forward(Tape<T>& tape, const std::vector<int>& pids, int x,
                     const TraceSink& trace = {}) const;

  // Full-resolution restoration of a batch whose extents are divisible
  // by 16.
  Tensor infer(const Tensor& x) const;

  // Restoration of arbitrary extents by blending overlapping tiles.
  // tile must be a positive multiple of 16; 0 <= overlap <= tile / 2.
  Tensor tiled_infer(const Tensor& x, int tile, int overlap) const;

 private:
  std::unordered_map<std::string, int> index_;
};

// ------------------------------------------------------ forward details

namespace detail {

template <class T>
int conv_node(Tape<T>& tape, const Model& m, const std::vector<int>& p,
              int x, const std::string& name, const ConvSpec& sp) {
  return tape.conv2d(x, p[std::size_t(m.find(name + ".w"))],
                     p[std::size_t(m.find(name + ".b"))], sp);
}

template <class T>
int affine_node(Tape<T>& tape, const Model& m, const std::vector<int>& p,
                int x, const std::string& name) {
  return tape.affine(x, p[std::size_t(m.find(name + ".w"))],
                     p[std::size_t(m.find(name + ".b"))]);
}

// Dense cascade: layer l sees the concatenation of the block input and all
// previous layer outputs, then a 1x1 projection maps the full concatenation
// back to the input width.
template <class T>
int dense_cascade(Tape<T>& tape, const Model& m, const std::vector<int>& p,
                  int x, const std::string& prefix,
                  const std::vector<int>& dilations) {
  std::vector<int> feats{x};
  for (std::size_t l = 0; l < dilations.size(); ++l) {
    const int d = dilations[l];
    const int cat = feats.size() == 1 ? x : tape.concat(feats);
    ConvSpec sp;
    sp.dilation = d;
    sp.padding = d;
    const int y = tape.relu(conv_node(tape, m, p, cat,
                                      prefix + ".layer" + std::to_string(l + 1), sp));
    feats.push_back(y);
  }
  const int cat = tape.concat(feats);
  ConvSpec pw;
  return conv_node(tape, m, p, cat, prefix + ".proj", pw);
}

template <class T>
int drdb(Tape<T>& tape, const Model& m, const std::vector<int>& p, int x,
         const std::string& prefix) {
  const int proj = dense_cascade(tape, m, p, x, prefix, {1, 2, 1});
  return tape.add(x, proj);
}

template <class T>
int sam(Tape<T>& tape, const Model& m, const std::vector<int>& p, int x,
        const std::string& prefix) {
  const TensorT<T>& xv = tape.val(x);
  const int H = xv.h(), W = xv.w(), C = xv.c();
  const std::vector<int> dil{1, 2, 3, 2, 1};
  auto branch_prefix = [&](int i) {
    return m.cfg.shared_branches() ? prefix + ".branch"
                                   : prefix + ".branch" + std::to_string(i + 1);
  };
  const int s2 = tape.resize(x, std::max(1, H / 2), std::max(1, W / 2));
  const int s4 = tape.resize(x, std::max(1, H / 4), std::max(1, W / 4));
  const int y0 = dense_cascade(tape, m, p, x, branch_prefix(0), dil);
  const int y1 = tape.resize(dense_cascade(tape, m, p, s2, branch_prefix(1), dil), H, W);
  const int y2 = tape.resize(dense_cascade(tape, m, p, s4, branch_prefix(2), dil), H, W);
  const int v = tape.concat({tape.gap(y0), tape.gap(y1), tape.gap(y2)});
  const int h1 = tape.relu(affine_node(tape, m, p, v, prefix + ".mlp.fc1"));
  const int h2 = tape.relu(affine_node(tape, m, p, h1, prefix + ".mlp.fc2"));
  const int w = tape.sigmoid(affine_node(tape, m, p, h2, prefix + ".mlp.fc3"));
  const int w0 = tape.slice_cols(w, 0, C);
  const int w1 = tape.slice_cols(w, C, C);
  const int w2 = tape.slice_cols(w, 2 * C, C);
  const int mix = tape.add(tape.add(tape.mul_channel(y0, w0), tape.mul_channel(y1, w1)),
                           tape.mul_channel(y2, w2));
  return tape.add(x, mix);
}

template <class T>
int level_blocks(Tape<T>& tape, const Model& m, const std::vector<int>& p,
                 int x, const std::string& prefix) {
  int y = drdb(tape, m, p, x, prefix + ".drdb");
  for (int s = 1; s <= m.cfg.sam_count(); ++s)
    y = sam(tape, m, p, y, prefix + ".sam" + std::to_string(s));
  return y;
}

}  // namespace detail

template <class T>
ForwardIds Model::forward(Tape<T>& tape, const std::vector<int>& pids, int x,
                          const TraceSink& trace) const {
  const TensorT<T>& xv = tape.val(x);
  if (xv.rank() != 4 || xv.c() != 3)
    throw ContractError("forward: input must be N,3,H,W, got " + shape_str(xv));
  if (xv.h() % 16 != 0 || xv.w() % 16 != 0)
    throw ContractError("forward: H and W must be divisible by 16, got " +
                        shape_str(xv));
  auto note = [&](const char* name, int id) {
    if (trace) trace(name, tape.val(id).shape);
  };
  note("input", x);

  ConvSpec head5;
  head5.padding = 2;
  ConvSpec k3;
  k3.padding = 1;
  ConvSpec k3s2;
  k3s2.padding = 1;
  k3s2.stride = 2;

  const int h0 = tape.pixel_shuffle_down(x, 2);
  const int f0 = tape.relu(detail::conv_node(tape, *this, pids, h0, "head.conv", head5));
  note("head", f0);

  const int e1 = detail::level_blocks(tape, *this, pids, f0, "enc1");
  note("enc1", e1);
  const int d1 = detail::conv_node(tape, *this, pids, e1, "down1", k3s2);
  const int e2 = detail::level_blocks(tape, *this, pids, d1, "enc2");
  note("enc2", e2);
  const int d2 = detail::conv_node(tape, *this, pids, e2, "down2", k3s2);
  const int e3 = detail::level_blocks(tape, *this, pids, d2, "enc3");
  note("enc3", e3);

  ForwardIds out{};
  int carry = -1;  // upsampled features from the previous decoder level
  const int skips[3] = {e3, e2, e1};
  for (int li = 0; li < 3; ++li) {
    const int level = 3 - li;
    const std::string prefix = "dec" + std::to_string(level);
    int fin = skips[li];
    if (carry >= 0) fin = tape.concat({carry, skips[li]});
    const int t = tape.relu(detail::conv_node(tape, *this, pids, fin, prefix + ".fuse", k3));
    const int body = detail::level_blocks(tape, *this, pids, t, prefix);
    note((prefix + ".body").c_str(), body);
    const int pre = detail::conv_node(tape, *this, pids, body, prefix + ".out", k3);
    out.pred[std::size_t(level - 1)] = tape.pixel_shuffle_up(pre, 2);
    note(("pred" + std::to_string(level)).c_str(), out.pred[std::size_t(level - 1)]);
    if (level > 1) {
      const TensorT<T>& bv = tape.val(body);
      carry = tape.resize(body, bv.h() * 2, bv.w() * 2);
    }
  }
  return out;
}

}  // namespace esdnet
