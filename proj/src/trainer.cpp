#include "esdnet/trainer.hpp"

#include <cmath>

#include "esdnet/metrics.hpp"

namespace esdnet {

double cosine_lr(double epoch_progress, const TrainConfig& cfg) {
  if (epoch_progress < 0) throw ContractError("cosine_lr: progress must be >= 0");
  const double t = std::fmod(epoch_progress, double(cfg.cycle_epochs));
  const double pi = 3.14159265358979323846;
  return cfg.lr_min +
         0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(pi * t / cfg.cycle_epochs));
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::string>& names,
               const std::vector<Tensor>& grads, AdamState& st,
               const TrainConfig& cfg, double lr) {
  if (grads.size() != params.size() || names.size() != params.size())
    throw ContractError("adam_step: gradient count mismatch");
  if (st.m.empty()) {
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor& p : params) {
      st.m.emplace_back(p.shape);
      st.v.emplace_back(p.shape);
    }
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(params[i]))
      throw ContractError("adam_step: gradient shape mismatch for " + names[i]);
    if (!all_finite(grads[i]))
      throw NumericError("non-finite gradient for parameter " + names[i]);
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    float* p = params[i].data.data();
    float* m = st.m[i].data.data();
    float* v = st.v[i].data.data();
    const float* g = grads[i].data.data();
    const std::size_t n = params[i].data.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double gk = double(g[k]);
      const double mk = cfg.beta1 * double(m[k]) + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * double(v[k]) + (1.0 - cfg.beta2) * gk * gk;
      m[k] = float(mk);
      v[k] = float(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      p[k] = float(double(p[k]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

ImagePair random_crop(const ImagePair& pair, int size, Rng& rng) {
  if (!pair.clean.same_shape(pair.moire))
    throw ContractError("random_crop: pair shapes differ");
  const int H = pair.clean.h(), W = pair.clean.w();
  if (H < size || W < size)
    throw ContractError("random_crop: image " + shape_str(pair.clean) +
                        " smaller than crop size " + std::to_string(size));
  const int oy = int(rng.uniform_int(std::uint64_t(H - size + 1)));
  const int ox = int(rng.uniform_int(std::uint64_t(W - size + 1)));
  auto cut = [&](const Tensor& src) {
    const int N = src.n(), C = src.c();
    Tensor out({N, C, size, size});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < size; ++y)
          std::copy(&src.at(n, c, oy + y, ox), &src.at(n, c, oy + y, ox) + size,
                    &out.at(n, c, y, 0));
    return out;
  };
  return {cut(pair.clean), cut(pair.moire)};
}

namespace {

// Stack single-image tensors (1,3,h,w) into one batch.
Tensor stack(const std::vector<Tensor>& items) {
  const int C = items[0].c(), H = items[0].h(), W = items[0].w();
  Tensor out({int(items.size()), C, H, W});
  const std::int64_t stride = std::int64_t(C) * H * W;
  for (std::size_t i = 0; i < items.size(); ++i)
    std::copy(items[i].data.begin(), items[i].data.end(),
              out.data.begin() + std::int64_t(i) * stride);
  return out;
}

std::vector<int> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = int(i);
  Rng rng(Rng::mix(seed, 0x5u + std::uint64_t(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::size_t(rng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainResult train(Model& model, const std::vector<ImagePair>& dataset,
                  const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const FeatureExtractor* fx) {
  cfg.validate();
  loss_cfg.validate();
  if (dataset.empty()) throw ContractError("train: dataset is empty");
  const int batch = std::min(cfg.batch, int(dataset.size()));
  const int batches_per_epoch = std::max(1, int(dataset.size()) / batch);
  const bool use_fx = fx != nullptr && loss_cfg.lambda != 0.0;

  AdamState adam;
  Rng crop_rng(Rng::mix(cfg.seed, 0xC0FFEEu));
  TrainResult result;
  result.log.reserve(std::size_t(cfg.total_epochs) * batches_per_epoch);
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const std::vector<int> order = epoch_order(dataset.size(), cfg.seed, epoch);
    for (int b = 0; b < batches_per_epoch; ++b) {
      std::vector<Tensor> cleans, moires;
      cleans.reserve(std::size_t(batch));
      moires.reserve(std::size_t(batch));
      for (int k = 0; k < batch; ++k) {
        const ImagePair& pair =
            dataset[std::size_t(order[std::size_t(b * batch + k) % dataset.size()])];
        ImagePair patch = pair.clean.h() == cfg.patch && pair.clean.w() == cfg.patch
                              ? pair
                              : random_crop(pair, cfg.patch, crop_rng);
        cleans.push_back(std::move(patch.clean));
        moires.push_back(std::move(patch.moire));
      }
      const double progress = double(step) / batches_per_epoch;
      const double lr = cosine_lr(progress, cfg);

      TapeF tape;
      const std::vector<int> pids = model.bind(tape, true);
      std::vector<int> fx_ids;
      if (use_fx) fx_ids = fx->bind(tape);
      const int input = tape.constant(stack(moires));
      const int gt = tape.constant(stack(cleans));
      const ForwardIds preds = model.forward(tape, pids, input);
      const LossIds loss =
          total_loss(tape, preds, gt, use_fx ? fx : nullptr, fx_ids, loss_cfg.lambda);
      const double loss_value = double(tape.val(loss.total).data[0]);
      if (!std::isfinite(loss_value))
        throw NumericError("loss became non-finite at step " + std::to_string(step + 1));
      tape.backward(loss.total);

      std::vector<Tensor> grads;
      grads.reserve(pids.size());
      for (std::size_t i = 0; i < pids.size(); ++i)
        grads.push_back(tape.has_grad(pids[i]) ? tape.grad(pids[i])
                                               : Tensor(model.values[i].shape));
      adam_step(model, grads, adam, cfg, lr);

      double l1_sum = 0.0, perc_sum = 0.0;
      for (int i = 0; i < 3; ++i) {
        l1_sum += double(tape.val(loss.l1[std::size_t(i)]).data[0]);
        if (use_fx)
          perc_sum += double(tape.val(loss.perceptual[std::size_t(i)]).data[0]);
      }
      ++step;
      result.log.push_back({step, progress, lr, loss_value, l1_sum, perc_sum});
    }
  }
  return result;
}

namespace {

Tensor center_crop_div16(const Tensor& x) {
  const int H = x.h() - x.h() % 16;
  const int W = x.w() - x.w() % 16;
  if (H < 16 || W < 16)
    throw DataError("image " + shape_str(x) + " too small to evaluate");
  if (H == x.h() && W == x.w()) return x;
  const int oy = (x.h() - H) / 2, ox = (x.w() - W) / 2;
  Tensor out({x.n(), x.c(), H, W});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < H; ++y)
        std::copy(&x.at(n, c, oy + y, ox), &x.at(n, c, oy + y, ox) + W,
                  &out.at(n, c, y, 0));
  return out;
}

Tensor clamp01(Tensor t) {
  for (float& v : t.data) v = std::min(1.0f, std::max(0.0f, v));
  return t;
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw ContractError("evaluate: no pairs");
  EvalReport report;
  double si = 0, pi = 0, so = 0, po = 0;
  for (const ImagePair& pair : pairs) {
    const Tensor clean = center_crop_div16(pair.clean);
    const Tensor moire = center_crop_div16(pair.moire);
    const Tensor restored = clamp01(model.infer(moire));
    EvalRow row;
    row.psnr_in = psnr(moire, clean);
    row.ssim_in = ssim(moire, clean);
    row.psnr_out = psnr(restored, clean);
    row.ssim_out = ssim(restored, clean);
    pi += row.psnr_in;
    si += row.ssim_in;
    po += row.psnr_out;
    so += row.ssim_out;
    report.rows.push_back(row);
  }
  const double n = double(report.rows.size());
  report.mean = {pi / n, si / n, po / n, so / n};
  return report;
}

}  // namespace esdnet
