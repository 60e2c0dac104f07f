#include "esdnet/config.hpp"

#include <fstream>

namespace esdnet {

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ContractError("config key " + key + " has non-numeric value '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return int(n);
  } catch (const std::exception&) {
    throw ContractError("config key " + key + " has non-integer value '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return std::uint64_t(n);
  } catch (const std::exception&) {
    throw ContractError("config key " + key + " has non-integer value '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ContractError("config key " + key + " expects 0/1, got '" + v + "'");
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "model.variant") { model.variant = value; return; }
  if (key == "model.width_div") { model.width_div = to_int(key, value); return; }

  if (key == "train.lr_max") { train.lr_max = to_double(key, value); return; }
  if (key == "train.lr_min") { train.lr_min = to_double(key, value); return; }
  if (key == "train.cycle_epochs") { train.cycle_epochs = to_int(key, value); return; }
  if (key == "train.total_epochs") { train.total_epochs = to_int(key, value); return; }
  if (key == "train.batch") { train.batch = to_int(key, value); return; }
  if (key == "train.patch") { train.patch = to_int(key, value); return; }
  if (key == "train.beta1") { train.beta1 = to_double(key, value); return; }
  if (key == "train.beta2") { train.beta2 = to_double(key, value); return; }
  if (key == "train.adam_eps") { train.adam_eps = to_double(key, value); return; }
  if (key == "train.seed") { train.seed = to_u64(key, value); return; }

  if (key == "loss.lambda") { loss.lambda = to_double(key, value); return; }
  if (key == "loss.perceptual_block") { loss.perceptual_block = to_int(key, value); return; }
  if (key == "loss.extractor_weights") { loss.extractor_weights = value; return; }
  if (key == "loss.extractor_seed") { loss.extractor_seed = to_u64(key, value); return; }

  if (key == "moire.amp_r") { moire.amp[0] = to_double(key, value); return; }
  if (key == "moire.amp_g") { moire.amp[1] = to_double(key, value); return; }
  if (key == "moire.amp_b") { moire.amp[2] = to_double(key, value); return; }
  if (key == "moire.fx") { moire.fx = to_double(key, value); return; }
  if (key == "moire.fy") { moire.fy = to_double(key, value); return; }
  if (key == "moire.phase_r") { moire.phase[0] = to_double(key, value); return; }
  if (key == "moire.phase_g") { moire.phase[1] = to_double(key, value); return; }
  if (key == "moire.phase_b") { moire.phase[2] = to_double(key, value); return; }
  if (key == "moire.gamma") { moire.gamma = to_double(key, value); return; }
  if (key == "moire.gain_r") { moire.gains[0] = to_double(key, value); return; }
  if (key == "moire.gain_g") { moire.gains[1] = to_double(key, value); return; }
  if (key == "moire.gain_b") { moire.gains[2] = to_double(key, value); return; }
  if (key == "moire.tone_strength") { moire.tone_strength = to_double(key, value); return; }
  if (key == "moire.seed") { moire_seed = to_u64(key, value); return; }
  if (key == "moire.sample") { moire_sample = to_bool(key, value); return; }

  throw ContractError("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ContractError(path + ":" + std::to_string(lineno) +
                          ": expected key=value, got '" + stripped + "'");
    cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace esdnet
