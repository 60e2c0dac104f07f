#pragma once

#include <string>

#include "esdnet/loss.hpp"
#include "esdnet/moire.hpp"
#include "esdnet/trainer.hpp"

// Flat key=value run configuration. Every field of the model, training,
// loss and degradation structs is addressable as section.name; unknown keys
// are rejected by name. The CLI applies its own flags after loading, so
// flags win over file values.

namespace esdnet {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  MoireParams moire;
  std::uint64_t moire_seed = 1;
  // When false, synth uses the moire.* values above verbatim for every
  // pair instead of sampling fresh parameters per pair.
  bool moire_sample = true;

  // Applies one key=value assignment; throws ContractError for unknown
  // keys or malformed values.
  void set(const std::string& key, const std::string& value);

  static RunConfig from_file(const std::string& path);
};

}  // namespace esdnet
