#include "esdnet/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "esdnet/config.hpp"
#include "esdnet/gradsuite.hpp"
#include "esdnet/image_io.hpp"
#include "esdnet/metrics.hpp"
#include "esdnet/moire.hpp"
#include "esdnet/trainer.hpp"
#include "esdnet/weights_io.hpp"

namespace esdnet {

namespace {

namespace fs = std::filesystem;

void parse_hw(const std::string& hw, int& h, int& w) {
  const std::size_t x = hw.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= hw.size())
    throw ContractError("--hw expects HEIGHTxWIDTH, got '" + hw + "'");
  try {
    std::size_t used = 0;
    h = std::stoi(hw.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(hw);
    const std::string ws = hw.substr(x + 1);
    w = std::stoi(ws, &used);
    if (used != ws.size()) throw std::invalid_argument(hw);
  } catch (const std::exception&) {
    throw ContractError("--hw expects HEIGHTxWIDTH, got '" + hw + "'");
  }
  if (h < 1 || w < 1) throw ContractError("--hw extents must be positive");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out << content;
    if (!out) {
      std::remove(tmp.c_str());
      throw DataError("failed writing " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("failed to move " + tmp + " into place");
  }
}

std::string pair_name(const char* stem, int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.png", stem, k);
  return buf;
}

std::vector<ImagePair> load_pair_dir(const std::string& dir) {
  std::vector<ImagePair> pairs;
  for (int k = 0;; ++k) {
    const fs::path clean = fs::path(dir) / pair_name("clean", k);
    const fs::path moire = fs::path(dir) / pair_name("moire", k);
    if (!fs::exists(clean) || !fs::exists(moire)) break;
    pairs.push_back({load_png(clean.string()), load_png(moire.string())});
  }
  if (pairs.empty())
    throw DataError("no clean/moire PNG pairs found in " + dir);
  return pairs;
}

Model load_model(const RunConfig& cfg, const std::string& weights) {
  Model model = Model::build(cfg.model, 0);
  load_into(weights, model.names, model.values);
  return model;
}

void append_params(std::string& out, const MoireParams& p) {
  out += "amp_r=" + fmt(p.amp[0]) + "\n";
  out += "amp_g=" + fmt(p.amp[1]) + "\n";
  out += "amp_b=" + fmt(p.amp[2]) + "\n";
  out += "fx=" + fmt(p.fx) + "\n";
  out += "fy=" + fmt(p.fy) + "\n";
  out += "phase_r=" + fmt(p.phase[0]) + "\n";
  out += "phase_g=" + fmt(p.phase[1]) + "\n";
  out += "phase_b=" + fmt(p.phase[2]) + "\n";
  out += "gamma=" + fmt(p.gamma) + "\n";
  out += "gain_r=" + fmt(p.gains[0]) + "\n";
  out += "gain_g=" + fmt(p.gains[1]) + "\n";
  out += "gain_b=" + fmt(p.gains[2]) + "\n";
  out += "tone_strength=" + fmt(p.tone_strength) + "\n";
}

// ------------------------------------------------------------- commands

int cmd_synth(int n, const std::string& hw, std::uint64_t seed,
              const std::string& out_dir, const std::string& kind,
              const RunConfig& cfg) {
  int h = 0, w = 0;
  parse_hw(hw, h, w);
  if (n < 1) throw ContractError("--n must be >= 1");
  fs::create_directories(out_dir);

  std::vector<MoirePair> pairs;
  if (cfg.moire_sample) {
    pairs = gen_dataset(n, h, w, seed, kind);
  } else {
    cfg.moire.validate();
    pairs.reserve(std::size_t(n));
    for (int k = 0; k < n; ++k) {
      const std::uint64_t sub = Rng::mix(seed, std::uint64_t(k));
      MoirePair pair;
      pair.clean = gen_clean(kind, h, w, Rng::mix(sub, 1));
      pair.params = cfg.moire;
      pair.moire = apply_degradation(pair.clean, pair.params);
      pairs.push_back(std::move(pair));
    }
  }

  std::string manifest;
  manifest += "count=" + std::to_string(n) + "\n";
  manifest += "kind=" + kind + "\n";
  manifest += "height=" + std::to_string(h) + "\n";
  manifest += "width=" + std::to_string(w) + "\n";
  manifest += "seed=" + std::to_string(seed) + "\n";
  for (int k = 0; k < n; ++k) {
    manifest += "\npair=" + std::to_string(k) + "\n";
    manifest += "clean=" + pair_name("clean", k) + "\n";
    manifest += "moire=" + pair_name("moire", k) + "\n";
    append_params(manifest, pairs[std::size_t(k)].params);
    save_png((fs::path(out_dir) / pair_name("clean", k)).string(),
             pairs[std::size_t(k)].clean);
    save_png((fs::path(out_dir) / pair_name("moire", k)).string(),
             pairs[std::size_t(k)].moire);
  }
  write_text_atomic((fs::path(out_dir) / "manifest.txt").string(), manifest);
  std::cout << "wrote " << n << " pairs to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data,
              const std::string& out_weights, const std::string& log_path) {
  cfg.model.validate();
  const std::vector<ImagePair> dataset = load_pair_dir(data);
  Model model = Model::build(cfg.model, Rng::mix(cfg.train.seed, 0xE5D));

  FeatureExtractor fx;
  const FeatureExtractor* fx_ptr = nullptr;
  if (cfg.loss.lambda != 0.0) {
    fx = FeatureExtractor::build(cfg.loss.perceptual_block, cfg.loss.extractor_seed);
    if (!cfg.loss.extractor_weights.empty())
      load_into(cfg.loss.extractor_weights, fx.names, fx.values);
    fx_ptr = &fx;
  }

  const TrainResult result = train(model, dataset, cfg.train, cfg.loss, fx_ptr);

  std::string csv = "step,epoch,lr,loss,l1_term,perceptual_term\n";
  for (const StepLog& row : result.log) {
    csv += std::to_string(row.step) + "," + fmt(row.epoch) + "," + fmt(row.lr) +
           "," + fmt(row.loss) + "," + fmt(row.l1_term) + "," +
           fmt(row.perceptual_term) + "\n";
  }
  save_weights(out_weights, model.names, model.values);
  write_text_atomic(log_path, csv);
  std::cout << "trained " << result.log.size() << " steps; weights in "
            << out_weights << ", log in " << log_path << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& weights,
              const std::string& in_path, const std::string& out_path, int tile,
              int overlap) {
  const Model model = load_model(cfg, weights);
  const Tensor input = load_png(in_path);
  const Tensor restored = model.tiled_infer(input, tile, overlap);
  save_png(out_path, restored);
  std::cout << "restored " << in_path << " -> " << out_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& weights,
             const std::string& data, const std::string& report_path) {
  const Model model = load_model(cfg, weights);
  const std::vector<ImagePair> pairs = load_pair_dir(data);
  const EvalReport report = evaluate(model, pairs);

  std::string csv = "index,psnr_in,ssim_in,psnr_out,ssim_out\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const EvalRow& r = report.rows[i];
    csv += std::to_string(i) + "," + fmt(r.psnr_in) + "," + fmt(r.ssim_in) + "," +
           fmt(r.psnr_out) + "," + fmt(r.ssim_out) + "\n";
  }
  csv += "mean," + fmt(report.mean.psnr_in) + "," + fmt(report.mean.ssim_in) +
         "," + fmt(report.mean.psnr_out) + "," + fmt(report.mean.ssim_out) + "\n";
  write_text_atomic(report_path, csv);
  std::cout << "mean psnr " << report.mean.psnr_out << " dB, ssim "
            << report.mean.ssim_out << " over " << report.rows.size()
            << " pairs; report in " << report_path << "\n";
  return 0;
}

int cmd_gradcheck() {
  const std::vector<GradSuiteEntry> entries = run_gradient_suite();
  bool ok = true;
  for (const GradSuiteEntry& e : entries) {
    std::cout << (e.pass ? "ok   " : "FAIL ") << e.name << "  max_rel "
              << e.report.max_rel << " (tol " << e.tolerance << ", "
              << e.report.probes << " probes, worst analytic "
              << e.report.analytic << " vs numeric " << e.report.numeric
              << ")\n";
    ok = ok && e.pass;
  }
  if (!ok) {
    std::cerr << "error: gradient checks failed\n";
    return 3;
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& weights,
              const std::string& hw, int runs, int tile, int overlap,
              std::uint64_t seed, const std::string& out_csv) {
  int h = 0, w = 0;
  parse_hw(hw, h, w);
  if (runs < 1) throw ContractError("--runs must be >= 1");

  Model model = weights.empty() ? Model::build(cfg.model, seed)
                                : load_model(cfg, weights);
  const Tensor frame = gen_clean("mixed", h, w, Rng::mix(seed, 0xBE));

  std::vector<double> seconds;
  seconds.reserve(std::size_t(runs));
  for (int r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor out = model.tiled_infer(frame, tile, overlap);
    const auto t1 = std::chrono::steady_clock::now();
    if (!all_finite(out)) throw NumericError("benchmark output is not finite");
    seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::vector<double> sorted = seconds;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double p95 =
      sorted[std::min(sorted.size() - 1,
                      std::size_t(std::ceil(0.95 * double(sorted.size())) - 1))];
  const double fps = 1.0 / median;

  std::string csv = "run,seconds\n";
  for (std::size_t i = 0; i < seconds.size(); ++i)
    csv += std::to_string(i + 1) + "," + fmt(seconds[i]) + "\n";
  csv += "median," + fmt(median) + "\n";
  csv += "p95," + fmt(p95) + "\n";
  csv += "fps," + fmt(fps) + "\n";
  write_text_atomic(out_csv, csv);
  std::printf("%dx%d tile %d overlap %d: median %.3f s, p95 %.3f s, %.3f fps\n",
              h, w, tile, overlap, median, p95, fps);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"screen-shot image demoireing"};
  app.require_subcommand(1);

  std::string config_path, hw = "64x64", out_dir = "dataset", kind = "mixed";
  std::string data, weights, in_path, out_path, report_path, log_path;
  int n = 16, tile = 256, overlap = 32, runs = 3;
  std::uint64_t seed = 0;

  CLI::App* synth = app.add_subcommand("synth", "generate clean/degraded pairs");
  synth->add_option("--n", n, "number of pairs");
  synth->add_option("--hw", hw, "pair size as HEIGHTxWIDTH");
  synth->add_option("--seed", seed, "dataset seed");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--kind", kind, "clean image kind");
  synth->add_option("--config", config_path, "run configuration file");

  CLI::App* train = app.add_subcommand("train", "train a model on a pair directory");
  train->add_option("--config", config_path, "run configuration file");
  train->add_option("--data", data, "pair directory from synth")->required();
  train->add_option("--out-weights", out_path, "weights file to write")->required();
  train->add_option("--log", log_path, "loss CSV path (default <out-weights>.loss.csv)");
  train->add_option("--seed", seed, "overrides train.seed");

  CLI::App* infer = app.add_subcommand("infer", "restore one PNG");
  infer->add_option("--config", config_path, "run configuration file");
  infer->add_option("--weights", weights, "weights file")->required();
  infer->add_option("--in", in_path, "degraded input PNG")->required();
  infer->add_option("--out", out_path, "restored output PNG")->required();
  infer->add_option("--tile", tile, "tile size (multiple of 16)");
  infer->add_option("--overlap", overlap, "tile overlap in pixels");

  CLI::App* eval = app.add_subcommand("eval", "score a model on a pair directory");
  eval->add_option("--config", config_path, "run configuration file");
  eval->add_option("--weights", weights, "weights file")->required();
  eval->add_option("--data", data, "pair directory from synth")->required();
  eval->add_option("--report", report_path, "metrics CSV to write")->required();

  app.add_subcommand("gradcheck", "finite-difference checks for all ops");

  CLI::App* bench = app.add_subcommand("bench", "time tiled restoration");
  bench->add_option("--config", config_path, "run configuration file");
  bench->add_option("--weights", weights, "weights file (random model if absent)");
  bench->add_option("--hw", hw, "frame size as HEIGHTxWIDTH")->required();
  bench->add_option("--runs", runs, "timed repetitions");
  bench->add_option("--tile", tile, "tile size (multiple of 16)");
  bench->add_option("--overlap", overlap, "tile overlap in pixels");
  bench->add_option("--seed", seed, "weights/frame seed when no weights given");
  bench->add_option("--out", report_path, "timing CSV path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::from_file(config_path);

    if (synth->parsed()) {
      const std::uint64_t s = synth->count("--seed") ? seed : cfg.moire_seed;
      return cmd_synth(n, hw, s, out_dir, kind, cfg);
    }
    if (train->parsed()) {
      if (train->count("--seed")) cfg.train.seed = seed;
      const std::string log =
          log_path.empty() ? out_path + ".loss.csv" : log_path;
      return cmd_train(cfg, data, out_path, log);
    }
    if (infer->parsed())
      return cmd_infer(cfg, weights, in_path, out_path, tile, overlap);
    if (eval->parsed()) return cmd_eval(cfg, weights, data, report_path);
    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
    if (bench->parsed()) {
      const std::string out = report_path.empty() ? "bench.csv" : report_path;
      return cmd_bench(cfg, weights, hw, runs, tile, overlap, seed, out);
    }
    throw ContractError("no subcommand given");
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace esdnet
