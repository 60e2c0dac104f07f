#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "esdnet/graph.hpp"
#include "esdnet/model.hpp"

// Training objective: predictions at three scales are each scored against
// bilinearly downsampled ground truth with an L1 term plus an optional
// perceptual term computed by a frozen convolutional feature extractor.

namespace esdnet {

struct LossConfig {
  double lambda = 1.0;       // weight of the perceptual term
  int perceptual_block = 3;  // extractor depth, 1..5
  std::string extractor_weights;  // weights file; empty means seeded random
  std::uint64_t extractor_seed = 7;

  void validate() const {
    if (lambda < 0) throw ContractError("loss lambda must be >= 0");
    if (perceptual_block < 1 || perceptual_block > 5)
      throw ContractError("perceptual_block must be in 1..5");
  }
};

// Frozen conv stack with the classic 16-layer topology, truncated after the
// last ReLU of the selected block. Parameters never join the optimizer.
class FeatureExtractor {
 public:
  int block = 3;
  std::vector<std::string> names;
  std::vector<Tensor> values;

  static FeatureExtractor build(int block, std::uint64_t seed);

  static const std::array<int, 5>& block_channels() {
    static const std::array<int, 5> c{64, 128, 256, 512, 512};
    return c;
  }
  static const std::array<int, 5>& convs_per_block() {
    static const std::array<int, 5> n{2, 2, 3, 3, 3};
    return n;
  }

  int find(const std::string& name) const;

  template <class T>
  std::vector<int> bind(Tape<T>& tape) const {
    std::vector<int> ids;
    ids.reserve(values.size());
    for (const Tensor& v : values) {
      if constexpr (std::is_same_v<T, float>)
        ids.push_back(tape.constant(v));
      else
        ids.push_back(tape.constant(v.template cast<T>()));
    }
    return ids;
  }

  template <class T>
  int forward(Tape<T>& tape, const std::vector<int>& ids, int x) const {
    const TensorT<T>& xv = tape.val(x);
    if (xv.rank() != 4 || xv.c() != 3)
      throw ContractError("extractor: input must be N,3,H,W, got " + shape_str(xv));
    ConvSpec k3;
    k3.padding = 1;
    int h = x;
    std::size_t pi = 0;
    for (int b = 1; b <= block; ++b) {
      for (int c = 1; c <= convs_per_block()[std::size_t(b - 1)]; ++c) {
        h = tape.relu(tape.conv2d(h, ids[pi], ids[pi + 1], k3));
        pi += 2;
      }
      if (b < block) h = tape.maxpool2(h);
    }
    return h;
  }
};

struct LossIds {
  int total = -1;
  std::array<int, 3> l1{{-1, -1, -1}};
  std::array<int, 3> perceptual{{-1, -1, -1}};
};

// Builds the full objective on the tape. gt is the full-resolution target
// node; lower-scale targets are produced here by bilinear downsampling. Pass
// fx as nullptr (or lambda 0) to train on L1 alone.
template <class T>
LossIds total_loss(Tape<T>& tape, const ForwardIds& preds, int gt,
                   const FeatureExtractor* fx, const std::vector<int>& fx_ids,
                   double lambda) {
  if (!tape.val(gt).same_shape(tape.val(preds.pred[0])))
    throw ContractError("total_loss: gt shape " + shape_str(tape.val(gt)) +
                        " does not match prediction " +
                        shape_str(tape.val(preds.pred[0])));
  const int gh = tape.val(gt).h(), gw = tape.val(gt).w();
  if (gh % 4 != 0 || gw % 4 != 0)
    throw ContractError("total_loss: gt extents must be divisible by 4");
  const bool use_fx = fx != nullptr && lambda != 0.0;
  LossIds ids;
  for (int i = 0; i < 3; ++i) {
    const int gti = i == 0 ? gt : tape.resize(gt, gh >> i, gw >> i);
    ids.l1[std::size_t(i)] = tape.l1_diff(preds.pred[std::size_t(i)], gti);
    int term = ids.l1[std::size_t(i)];
    if (use_fx) {
      const int fp = fx->forward(tape, fx_ids, preds.pred[std::size_t(i)]);
      const int fg = fx->forward(tape, fx_ids, gti);
      ids.perceptual[std::size_t(i)] = tape.l1_diff(fp, fg);
      term = tape.add(term, tape.scale(ids.perceptual[std::size_t(i)], lambda));
    }
    ids.total = ids.total < 0 ? term : tape.add(ids.total, term);
  }
  return ids;
}

// Bilinear pyramid of a ground-truth image: full, half and quarter size.
std::array<Tensor, 3> downsample_gt(const Tensor& gt);

}  // namespace esdnet
