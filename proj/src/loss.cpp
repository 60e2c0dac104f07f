#include "esdnet/loss.hpp"

#include <cmath>

namespace esdnet {

FeatureExtractor FeatureExtractor::build(int block, std::uint64_t seed) {
  if (block < 1 || block > 5)
    throw ContractError("extractor block must be in 1..5");
  FeatureExtractor fx;
  fx.block = block;
  Rng rng(seed);
  int ci = 3;
  for (int b = 1; b <= block; ++b) {
    const int co = block_channels()[std::size_t(b - 1)];
    for (int c = 1; c <= convs_per_block()[std::size_t(b - 1)]; ++c) {
      const std::string name =
          "vgg.conv" + std::to_string(b) + "_" + std::to_string(c);
      Tensor w({co, ci, 3, 3});
      const double bound = std::sqrt(6.0 / (ci * 9));
      for (float& v : w.data) v = float(rng.uniform(-bound, bound));
      fx.names.push_back(name + ".w");
      fx.values.push_back(std::move(w));
      fx.names.push_back(name + ".b");
      fx.values.push_back(Tensor({co}));
      ci = co;
    }
  }
  return fx;
}

int FeatureExtractor::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return int(i);
  throw ContractError("unknown extractor parameter " + name);
}

std::array<Tensor, 3> downsample_gt(const Tensor& gt) {
  if (gt.rank() != 4)
    throw ContractError("downsample_gt: rank-4 input required");
  if (gt.h() % 4 != 0 || gt.w() % 4 != 0)
    throw ContractError("downsample_gt: extents must be divisible by 4, got " +
                        shape_str(gt));
  return {gt, resize_bilinear_fwd(gt, gt.h() / 2, gt.w() / 2),
          resize_bilinear_fwd(gt, gt.h() / 4, gt.w() / 4)};
}

}  // namespace esdnet
