#pragma once

#include <string>

#include "csrl/train/trainer.hpp"

namespace csrl::cli {

// Training artifact: a JSON manifest (<prefix>.json) describing scalar state
// and named array segments of a raw little-endian float64 blob
// (<prefix>.bin). Save/load round trips are bit-identical.
struct Checkpoint {
  int version = 1;
  std::string config_hash;
  train::TrainConfig config;
  train::AgentBundle bundle;

  void save(const std::string& prefix) const;
  static Checkpoint load(const std::string& prefix);  // throws on missing/corrupt files

  // Rebuilds a trainer positioned exactly where training left off; the
  // stored config hash must match the checkpoint's own config.
  train::Trainer make_trainer() const;
};

Checkpoint make_checkpoint(const train::Trainer& trainer);

}  // namespace csrl::cli
