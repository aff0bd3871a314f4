#pragma once

#include <map>
#include <string>
#include <vector>

#include "mshc/model.hpp"

namespace mshc {

// Optimizer/loop state carried alongside the model so training can resume
// exactly where it stopped.
struct TrainerSnapshot {
  int epochs_completed = 0;
  i64 global_step = 0;
  std::string rng_state;
};

struct CheckpointRecord {
  Shape shape;
  std::vector<real> data;
};

// Decoded checkpoint container: "MSHC" magic, format version, canonical JSON
// header (model config, dtype, seed, optional trainer snapshot), then named
// little-endian records sorted by name. Save of a loaded checkpoint
// reproduces the file byte for byte.
struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  bool has_snapshot = false;
  TrainerSnapshot snapshot;
  std::map<std::string, CheckpointRecord> records;
};

void save_checkpoint(const std::string& path, ModelState& state,
                     const TrainerSnapshot* snapshot = nullptr,
                     const std::map<std::string, CheckpointRecord>* extra =
                         nullptr);

Checkpoint load_checkpoint(const std::string& path);

// Rebuilds a ModelState from a checkpoint (parameters and BN statistics).
ModelState restore_model(const Checkpoint& ckpt);

}  // namespace mshc
