#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "esdnet/moire.hpp"
#include "esdnet/trainer.hpp"
#include "oracles.hpp"

using namespace esdnet;
using oracles::bit_equal;

namespace {

std::vector<ImagePair> toy_pairs(int n, int hw, std::uint64_t seed) {
  std::vector<ImagePair> out;
  for (const MoirePair& p : gen_dataset(n, hw, hw, seed))
    out.push_back({p.clean, p.moire});
  return out;
}

Model toy_model(std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.width_div = 4;
  return Model::build(cfg, seed);
}

}  // namespace

TEST_CASE("the schedule starts each cycle at lr_max exactly") {
  TrainConfig cfg;
  CHECK(cosine_lr(0.0, cfg) == 2e-4);
  CHECK(cosine_lr(50.0, cfg) == 2e-4);
  CHECK(cosine_lr(100.0, cfg) == 2e-4);
}

TEST_CASE("the schedule passes through the midpoint and floor of each cycle") {
  TrainConfig cfg;
  const double mid = 0.5 * (cfg.lr_max + cfg.lr_min);
  CHECK(cosine_lr(25.0, cfg) == doctest::Approx(mid).epsilon(1e-9));
  CHECK(cosine_lr(49.9999, cfg) ==
        doctest::Approx(cfg.lr_min).epsilon(1e-4));
  CHECK(cosine_lr(12.5, cfg) ==
        doctest::Approx(cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                                         (1.0 + std::cos(3.14159265358979323846 / 4)))
            .epsilon(1e-9));
}

TEST_CASE("the schedule repeats with the cycle period") {
  TrainConfig cfg;
  for (const double e : {0.3, 7.25, 31.0, 49.5})
    CHECK(cosine_lr(e, cfg) == doctest::Approx(cosine_lr(e + 50.0, cfg)).epsilon(1e-9));
}

TEST_CASE("the schedule is monotone within a half cycle") {
  TrainConfig cfg;
  double prev = cosine_lr(0.0, cfg);
  for (double e = 0.5; e <= 49.5; e += 0.5) {
    const double v = cosine_lr(e, cfg);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("adam leaves parameters untouched when gradients are zero") {
  std::vector<Tensor> params{Tensor::full({3}, 1.5f)};
  const std::vector<Tensor> before = params;
  std::vector<std::string> names{"p"};
  std::vector<Tensor> grads{Tensor({3})};
  AdamState st;
  TrainConfig cfg;
  adam_step(params, names, grads, st, cfg, 0.1);
  CHECK(bit_equal(params[0], before[0]));
  CHECK(st.t == 1);
}

TEST_CASE("the first adam step moves by lr times the gradient sign") {
  std::vector<Tensor> params{Tensor::full({1}, 1.0f)};
  std::vector<std::string> names{"p"};
  std::vector<Tensor> grads{Tensor::full({1}, 0.5f)};
  AdamState st;
  TrainConfig cfg;
  adam_step(params, names, grads, st, cfg, 0.1);
  // Bias correction cancels on step one, so the update is lr * g / (|g| + eps).
  CHECK(double(params[0].data[0]) == doctest::Approx(0.9).epsilon(1e-6));

  std::vector<Tensor> neg{Tensor::full({1}, 1.0f)};
  std::vector<Tensor> ngrads{Tensor::full({1}, -2.0f)};
  AdamState st2;
  adam_step(neg, names, ngrads, st2, cfg, 0.1);
  CHECK(double(neg[0].data[0]) == doctest::Approx(1.1).epsilon(1e-6));
}

TEST_CASE("adam drives a quadratic to its minimum") {
  std::vector<Tensor> params{Tensor::full({1}, 1.0f)};
  std::vector<std::string> names{"theta"};
  AdamState st;
  TrainConfig cfg;
  for (int i = 0; i < 100; ++i) {
    std::vector<Tensor> grads{Tensor::full({1}, 2.0f * params[0].data[0])};
    adam_step(params, names, grads, st, cfg, 0.1);
  }
  CHECK(std::abs(double(params[0].data[0])) < 0.05);
}

TEST_CASE("adam rejects non-finite gradients by parameter name") {
  std::vector<Tensor> params{Tensor::full({2}, 1.0f)};
  std::vector<std::string> names{"enc1.drdb.layer1.w"};
  Tensor g({2});
  g.data = {0.1f, std::numeric_limits<float>::quiet_NaN()};
  std::vector<Tensor> grads{g};
  AdamState st;
  TrainConfig cfg;
  CHECK_THROWS_WITH_AS(adam_step(params, names, grads, st, cfg, 0.1),
                       doctest::Contains("enc1.drdb.layer1.w"), NumericError);
}

TEST_CASE("random_crop is the identity at full size and aligned otherwise") {
  Rng rng(90);
  const std::vector<MoirePair> ds = gen_dataset(1, 32, 32, 17);
  const ImagePair pair{ds[0].clean, ds[0].moire};
  Rng crop_rng(5);
  const ImagePair same = random_crop(pair, 32, crop_rng);
  CHECK(bit_equal(same.clean, pair.clean));
  CHECK(bit_equal(same.moire, pair.moire));

  Rng crop_rng2(6);
  const ImagePair cut = random_crop(pair, 16, crop_rng2);
  REQUIRE(cut.clean.shape == std::vector<int>({1, 3, 16, 16}));
  REQUIRE(cut.moire.shape == std::vector<int>({1, 3, 16, 16}));
  // Locate the window by matching the clean crop, then require the moire
  // crop to come from the same offsets.
  bool found = false;
  for (int oy = 0; oy <= 16 && !found; ++oy)
    for (int ox = 0; ox <= 16 && !found; ++ox) {
      bool match = true;
      for (int y = 0; y < 16 && match; ++y)
        for (int x = 0; x < 16 && match; ++x)
          match = pair.clean.at(0, 0, oy + y, ox + x) == cut.clean.at(0, 0, y, x);
      if (!match) continue;
      bool aligned = true;
      for (int c = 0; c < 3 && aligned; ++c)
        for (int y = 0; y < 16 && aligned; ++y)
          for (int x = 0; x < 16 && aligned; ++x)
            aligned = pair.moire.at(0, c, oy + y, ox + x) == cut.moire.at(0, c, y, x) &&
                      pair.clean.at(0, c, oy + y, ox + x) == cut.clean.at(0, c, y, x);
      found = aligned;
    }
  CHECK(found);
  CHECK_THROWS_AS(random_crop(pair, 64, crop_rng2), ContractError);
}

TEST_CASE("training runs the documented number of steps and decreases the loss") {
  Model model = toy_model();
  const std::vector<ImagePair> data = toy_pairs(1, 32, 23);
  TrainConfig cfg;
  cfg.total_epochs = 30;
  cfg.batch = 1;
  cfg.patch = 32;
  cfg.seed = 4;
  LossConfig loss_cfg;
  loss_cfg.lambda = 0.0;
  const TrainResult r = train(model, data, cfg, loss_cfg, nullptr);
  REQUIRE(r.log.size() == 30);
  CHECK(r.log.front().step == 1);
  CHECK(r.log.back().step == 30);
  CHECK(r.log.back().loss < r.log.front().loss);
  for (const StepLog& s : r.log) {
    CHECK(std::isfinite(s.loss));
    CHECK(s.perceptual_term == 0.0);
    CHECK(s.lr <= cfg.lr_max);
    CHECK(s.lr >= cfg.lr_min);
  }
}

TEST_CASE("training is bitwise deterministic in weights and log") {
  const std::vector<ImagePair> data = toy_pairs(3, 32, 29);
  TrainConfig cfg;
  cfg.total_epochs = 2;
  cfg.batch = 2;
  cfg.patch = 32;
  cfg.seed = 12;
  LossConfig loss_cfg;
  loss_cfg.lambda = 0.0;

  Model a = toy_model(8);
  const TrainResult ra = train(a, data, cfg, loss_cfg, nullptr);
  Model b = toy_model(8);
  const TrainResult rb = train(b, data, cfg, loss_cfg, nullptr);

  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].loss == rb.log[i].loss);
    CHECK(ra.log[i].lr == rb.log[i].lr);
  }
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(bit_equal(a.values[i], b.values[i]));
}

TEST_CASE("the feature extractor stays frozen through training") {
  Model model = toy_model();
  const std::vector<ImagePair> data = toy_pairs(1, 32, 37);
  TrainConfig cfg;
  cfg.total_epochs = 2;
  cfg.batch = 1;
  cfg.patch = 32;
  LossConfig loss_cfg;
  loss_cfg.lambda = 1.0;
  loss_cfg.perceptual_block = 1;
  const FeatureExtractor fx = FeatureExtractor::build(1, 19);
  const std::vector<Tensor> before = fx.values;
  const TrainResult r = train(model, data, cfg, loss_cfg, &fx);
  for (std::size_t i = 0; i < fx.values.size(); ++i)
    CHECK(bit_equal(fx.values[i], before[i]));
  for (const StepLog& s : r.log) CHECK(s.perceptual_term > 0.0);
}

TEST_CASE("batches drop the remainder and shrink to the dataset") {
  Model model = toy_model();
  const std::vector<ImagePair> data = toy_pairs(3, 32, 41);
  TrainConfig cfg;
  cfg.total_epochs = 2;
  cfg.batch = 2;
  cfg.patch = 32;
  LossConfig loss_cfg;
  loss_cfg.lambda = 0.0;
  const TrainResult r = train(model, data, cfg, loss_cfg, nullptr);
  // 3 pairs at batch 2 give one batch per epoch.
  CHECK(r.log.size() == 2);

  Model model2 = toy_model();
  const std::vector<ImagePair> tiny = toy_pairs(1, 32, 43);
  TrainConfig cfg2 = cfg;
  cfg2.batch = 8;
  cfg2.total_epochs = 1;
  const TrainResult r2 = train(model2, tiny, cfg2, loss_cfg, nullptr);
  CHECK(r2.log.size() == 1);
}

TEST_CASE("training rejects an empty dataset and a NaN model") {
  Model model = toy_model();
  TrainConfig cfg;
  LossConfig loss_cfg;
  CHECK_THROWS_AS(train(model, {}, cfg, loss_cfg, nullptr), ContractError);

  // Poison a parameter with a relu-free path to the prediction; relu maps
  // NaN to zero, so a head-conv NaN would be absorbed before the loss.
  Model poisoned = toy_model();
  poisoned.values[std::size_t(poisoned.find("dec1.out.w"))].data[0] =
      std::numeric_limits<float>::quiet_NaN();
  const std::vector<ImagePair> data = toy_pairs(1, 32, 47);
  TrainConfig cfg2;
  cfg2.total_epochs = 1;
  cfg2.batch = 1;
  cfg2.patch = 32;
  LossConfig l0;
  l0.lambda = 0.0;
  CHECK_THROWS_AS(train(poisoned, data, cfg2, l0, nullptr), NumericError);
}

TEST_CASE("evaluate scores inputs perfectly when they equal the target") {
  const Model model = toy_model();
  std::vector<ImagePair> pairs;
  const Tensor clean = gen_clean("gradient", 32, 32, 3);
  pairs.push_back({clean, clean});
  const EvalReport rep = evaluate(model, pairs);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].psnr_in == 100.0);
  CHECK(rep.rows[0].ssim_in == 1.0);
  CHECK(std::isfinite(rep.rows[0].psnr_out));
  CHECK(rep.mean.psnr_in == 100.0);
}

TEST_CASE("evaluate center-crops inputs that do not divide by 16") {
  const Model model = toy_model();
  std::vector<ImagePair> pairs;
  const Tensor clean = gen_clean("gradient", 40, 56, 3);
  const Tensor moire = gen_clean("gradient", 40, 56, 4);
  pairs.push_back({clean, moire});
  const EvalReport rep = evaluate(model, pairs);
  REQUIRE(rep.rows.size() == 1);
  CHECK(std::isfinite(rep.rows[0].psnr_out));
  CHECK(rep.rows[0].ssim_out >= -1.0);
  CHECK(rep.rows[0].ssim_out <= 1.0);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.validate();
  TrainConfig bad = cfg;
  bad.lr_min = bad.lr_max;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  TrainConfig badp = cfg;
  badp.patch = 20;
  CHECK_THROWS_AS(badp.validate(), ContractError);
  TrainConfig bade = cfg;
  bade.total_epochs = 0;
  CHECK_THROWS_AS(bade.validate(), ContractError);
}
