#pragma once

#include <cstdint>
#include <vector>

#include "esdnet/loss.hpp"
#include "esdnet/model.hpp"
#include "esdnet/moire.hpp"

// Optimization loop: Adam with cyclic cosine annealing over random crops of
// aligned clean/degraded pairs, plus the evaluation pass used for reports.

namespace esdnet {

struct TrainConfig {
  double lr_max = 2e-4;
  double lr_min = 1e-6;
  int cycle_epochs = 50;
  int total_epochs = 4;
  int batch = 2;
  int patch = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    if (lr_min < 0 || lr_min >= lr_max)
      throw ContractError("train: need 0 <= lr_min < lr_max");
    if (cycle_epochs < 1) throw ContractError("train: cycle_epochs must be >= 1");
    if (total_epochs < 1) throw ContractError("train: total_epochs must be >= 1");
    if (batch < 1) throw ContractError("train: batch must be >= 1");
    if (patch < 16 || patch % 16 != 0)
      throw ContractError("train: patch must be a positive multiple of 16");
  }
};

// Cyclic cosine annealing, restarting at lr_max every cycle_epochs.
// epoch_progress advances continuously within epochs.
double cosine_lr(double epoch_progress, const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m, v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update. Moments are allocated on first use; a
// non-finite gradient aborts before any parameter changes, naming the
// offending parameter.
void adam_step(std::vector<Tensor>& params, const std::vector<std::string>& names,
               const std::vector<Tensor>& grads, AdamState& st,
               const TrainConfig& cfg, double lr);

inline void adam_step(Model& model, const std::vector<Tensor>& grads,
                      AdamState& st, const TrainConfig& cfg, double lr) {
  adam_step(model.values, model.names, grads, st, cfg, lr);
}

struct ImagePair {
  Tensor clean;
  Tensor moire;
};

// The same window cut from both images; offsets are drawn from rng.
ImagePair random_crop(const ImagePair& pair, int size, Rng& rng);

struct StepLog {
  std::int64_t step;  // 1-based
  double epoch;       // continuous progress at the time of the step
  double lr;
  double loss;
  double l1_term;          // sum of the three pixel terms
  double perceptual_term;  // sum of the three feature terms, unweighted
};

struct TrainResult {
  std::vector<StepLog> log;
};

// Runs the full loop in place. Pass fx = nullptr (or lambda 0) for pure L1
// training. Deterministic for a fixed config and dataset.
TrainResult train(Model& model, const std::vector<ImagePair>& dataset,
                  const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const FeatureExtractor* fx);

struct EvalRow {
  double psnr_in;
  double ssim_in;
  double psnr_out;
  double ssim_out;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean{};
};

// Restores every pair with the model (center-cropped so extents divide by
// 16, predictions clamped to [0,1]) and scores input and output against the
// clean image.
EvalReport evaluate(const Model& model, const std::vector<ImagePair>& pairs);

}  // namespace esdnet
