#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "esdnet/model.hpp"
#include "oracles.hpp"

using namespace esdnet;
using oracles::bit_equal;
using oracles::max_abs_diff;

namespace {

Model small_model(int width_div, std::uint64_t seed = 9,
                  const std::string& variant = "standard") {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.width_div = width_div;
  return Model::build(cfg, seed);
}

}  // namespace

TEST_CASE("parameter totals hit the analytic values for every variant") {
  CHECK(small_model(1).param_count() == 5934156);
  CHECK(small_model(1, 9, "large").param_count() == 10623444);
  CHECK(small_model(1, 9, "weight_shared").param_count() == 3014316);
}

TEST_CASE("parameter names are unique and resolvable") {
  const Model m = small_model(4);
  std::set<std::string> seen(m.names.begin(), m.names.end());
  CHECK(seen.size() == m.names.size());
  for (std::size_t i = 0; i < m.names.size(); ++i)
    CHECK(m.find(m.names[i]) == int(i));
  CHECK_THROWS_AS(m.find("no.such.parameter"), ContractError);
}

TEST_CASE("weight sharing collapses the pyramid branches") {
  const Model shared = small_model(4, 9, "weight_shared");
  const Model standard = small_model(4);
  bool shared_has_plain_branch = false, shared_has_numbered = false;
  for (const std::string& n : shared.names) {
    if (n.find(".branch.") != std::string::npos) shared_has_plain_branch = true;
    if (n.find(".branch1.") != std::string::npos) shared_has_numbered = true;
  }
  CHECK(shared_has_plain_branch);
  CHECK_FALSE(shared_has_numbered);
  bool standard_has_branch3 = false;
  for (const std::string& n : standard.names)
    if (n.find(".branch3.") != std::string::npos) standard_has_branch3 = true;
  CHECK(standard_has_branch3);
  CHECK(shared.param_count() < standard.param_count());
}

TEST_CASE("initialization is seed deterministic") {
  const Model a = small_model(4, 123);
  const Model b = small_model(4, 123);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(bit_equal(a.values[i], b.values[i]));
  const Model c = small_model(4, 124);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    diff += max_abs_diff(a.values[i], c.values[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("biases start at zero and weights within the fan-in bound") {
  const Model m = small_model(2, 77);
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    if (m.values[i].rank() == 1) {
      for (const float v : m.values[i].data) CHECK(v == 0.0f);
    } else {
      bool nonzero = false;
      for (const float v : m.values[i].data) nonzero = nonzero || v != 0.0f;
      CHECK(nonzero);
    }
  }
}

TEST_CASE("the full-width trace reports the documented channel widths") {
  const Model m = small_model(1);
  std::map<std::string, std::vector<int>> trace;
  TapeF tape;
  const std::vector<int> pids = m.bind(tape, false);
  const int x = tape.constant(Tensor::full({1, 3, 64, 64}, 0.25f));
  m.forward(tape, pids, x,
            [&](const std::string& name, const std::vector<int>& shape) {
              trace[name] = shape;
            });
  CHECK(trace.at("head") == std::vector<int>({1, 48, 32, 32}));
  CHECK(trace.at("enc1") == std::vector<int>({1, 48, 32, 32}));
  CHECK(trace.at("enc2") == std::vector<int>({1, 96, 16, 16}));
  CHECK(trace.at("enc3") == std::vector<int>({1, 192, 8, 8}));
  CHECK(trace.at("dec3.body") == std::vector<int>({1, 64, 8, 8}));
  CHECK(trace.at("dec2.body") == std::vector<int>({1, 64, 16, 16}));
  CHECK(trace.at("dec1.body") == std::vector<int>({1, 64, 32, 32}));
  CHECK(trace.at("pred1") == std::vector<int>({1, 3, 64, 64}));
  CHECK(trace.at("pred2") == std::vector<int>({1, 3, 32, 32}));
  CHECK(trace.at("pred3") == std::vector<int>({1, 3, 16, 16}));
}

TEST_CASE("prediction sizes follow the input at 256x256") {
  const Model m = small_model(4);
  TapeF tape;
  const std::vector<int> pids = m.bind(tape, false);
  const int x = tape.constant(Tensor::full({1, 3, 256, 256}, 0.5f));
  const ForwardIds preds = m.forward(tape, pids, x);
  CHECK(tape.val(preds.pred[0]).shape == std::vector<int>({1, 3, 256, 256}));
  CHECK(tape.val(preds.pred[1]).shape == std::vector<int>({1, 3, 128, 128}));
  CHECK(tape.val(preds.pred[2]).shape == std::vector<int>({1, 3, 64, 64}));
}

TEST_CASE("forward validates its input contract") {
  const Model m = small_model(4);
  TapeF tape;
  const std::vector<int> pids = m.bind(tape, false);
  const int bad_extent = tape.constant(Tensor::full({1, 3, 40, 64}, 0.5f));
  CHECK_THROWS_AS(m.forward(tape, pids, bad_extent), ContractError);
  const int bad_channels = tape.constant(Tensor::full({1, 4, 64, 64}, 0.5f));
  CHECK_THROWS_AS(m.forward(tape, pids, bad_channels), ContractError);
}

TEST_CASE("infer is deterministic for a fixed model") {
  const Model m = small_model(4);
  Rng rng(31);
  const Tensor x = oracles::rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
  CHECK(bit_equal(m.infer(x), m.infer(x)));
}

TEST_CASE("a single covering tile reproduces whole-image inference bit for bit") {
  const Model m = small_model(4);
  Rng rng(32);
  const Tensor x = oracles::rand_tensor({1, 3, 48, 48}, rng, 0.0, 1.0);
  const Tensor whole = m.infer(x);
  const Tensor tiled = m.tiled_infer(x, 64, 16);
  REQUIRE(tiled.shape == whole.shape);
  CHECK(bit_equal(tiled, whole));
}

TEST_CASE("tiled assembly matches a hand-built feathered mosaic") {
  const Model m = small_model(4);
  Rng rng(33);
  const Tensor x = oracles::rand_tensor({1, 3, 96, 96}, rng, 0.0, 1.0);
  const int tile = 64, overlap = 32, ext = 96;
  const Tensor tiled = m.tiled_infer(x, tile, overlap);
  REQUIRE(tiled.shape == x.shape);

  // Starts cover [0, ext) at stride tile-overlap, last start pulled back so
  // the final tile ends on the boundary.
  std::vector<int> starts;
  for (int s = 0;; s += tile - overlap) {
    const int c = std::min(s, ext - tile);
    if (starts.empty() || c > starts.back()) starts.push_back(c);
    if (c + tile >= ext) break;
  }
  REQUIRE(starts == std::vector<int>({0, 32}));

  // Linear ramp of length overlap at each tile edge, flat 1 in the middle.
  std::vector<double> prof(tile);
  for (int e = 0; e < tile; ++e)
    prof[std::size_t(e)] =
        std::min(1.0, double(std::min(e + 1, tile - e)) / (overlap + 1));

  std::vector<double> num(std::size_t(3) * ext * ext, 0.0);
  std::vector<double> den(std::size_t(ext) * ext, 0.0);
  for (int ty : starts)
    for (int tx : starts) {
      Tensor patch({1, 3, tile, tile});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < tile; ++y)
          for (int xx = 0; xx < tile; ++xx)
            patch.at(0, c, y, xx) = x.at(0, c, ty + y, tx + xx);
      const Tensor r = m.infer(patch);
      for (int y = 0; y < tile; ++y)
        for (int xx = 0; xx < tile; ++xx) {
          const double w = prof[std::size_t(y)] * prof[std::size_t(xx)];
          den[std::size_t(ty + y) * ext + (tx + xx)] += w;
          for (int c = 0; c < 3; ++c)
            num[(std::size_t(c) * ext + std::size_t(ty + y)) * ext + (tx + xx)] +=
                w * double(r.at(0, c, y, xx));
        }
    }
  double scale = 0.0, worst = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ext; ++y)
      for (int xx = 0; xx < ext; ++xx) {
        const double manual = num[(std::size_t(c) * ext + std::size_t(y)) * ext + xx] /
                              den[std::size_t(y) * ext + xx];
        scale = std::max(scale, std::abs(manual));
        worst = std::max(worst, std::abs(manual - double(tiled.at(0, c, y, xx))));
      }
  CHECK(worst <= 1e-5 * scale);
}

TEST_CASE("tiled inference handles extents that are not multiples of 16") {
  const Model m = small_model(4);
  Rng rng(34);
  const Tensor x = oracles::rand_tensor({1, 3, 50, 70}, rng, 0.0, 1.0);
  const Tensor y = m.tiled_infer(x, 64, 16);
  CHECK(y.shape == std::vector<int>({1, 3, 50, 70}));
  CHECK(all_finite(y));
}

TEST_CASE("tiled inference validates tile and overlap") {
  const Model m = small_model(4);
  const Tensor x = Tensor::full({1, 3, 64, 64}, 0.5f);
  CHECK_THROWS_AS(m.tiled_infer(x, 60, 16), ContractError);
  CHECK_THROWS_AS(m.tiled_infer(x, 0, 0), ContractError);
  CHECK_THROWS_AS(m.tiled_infer(x, 64, 48), ContractError);
  CHECK_THROWS_AS(m.tiled_infer(x, 64, -1), ContractError);
}

TEST_CASE("config validation rejects bad variants and widths") {
  ModelConfig cfg;
  cfg.variant = "huge";
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  ModelConfig odd;
  odd.width_div = 3;
  CHECK_THROWS_AS(odd.validate(), ContractError);
  ModelConfig fine;
  fine.width_div = 2;
  fine.validate();
}
