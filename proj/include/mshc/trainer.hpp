#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mshc/checkpoint.hpp"
#include "mshc/data.hpp"
#include "mshc/model.hpp"
#include "mshc/rng.hpp"

namespace mshc {

enum class BatchUnit { NodeBatch, Patch };
enum class OptimizerKind { Adam, MomentumSgd };

struct TrainConfig {
  int epochs = 200;
  int minibatch_size = 7;
  real lr_initial = real(1e-3);
  real lr_decay_factor = real(0.5);
  int lr_decay_every = 50;
  real weight_reg = real(0.001);  // squared-magnitude penalty on weights
  std::uint64_t seed = 0;
  BatchUnit batch_unit = BatchUnit::NodeBatch;
  int patch_size = 27;
  OptimizerKind optimizer = OptimizerKind::Adam;
  real adam_beta1 = real(0.9);
  real adam_beta2 = real(0.999);
  real adam_eps = real(1e-8);
  real sgd_momentum = real(0.9);
  real clip_norm = real(5);  // global gradient norm ceiling, 0 disables

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

real lr_at_epoch(const TrainConfig& cfg, int epoch);

// Shuffled partition of the training pixels into minibatch_size groups; the
// last short group is kept. Patch mode uses the same partition, with each
// pixel becoming a patch center.
std::vector<std::vector<i64>> make_batches(const std::vector<i64>& pixels,
                                           const TrainConfig& cfg, Rng& rng);

struct TrainReport {
  std::vector<double> step_loss;
  std::vector<real> step_lr;
  std::vector<int> step_epoch;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<real> epoch_lr;
  std::vector<double> epoch_train_oa;
  double wall_seconds = 0;
  std::string checkpoint_path;

  void write_csv(const std::string& path) const;
};

struct TrainResult {
  ModelState state;
  TrainReport report;
};

// Full training loop: per epoch, per batch forward_full -> cross-entropy +
// weight penalty -> backward -> clipped adaptive update at the scheduled
// rate. The cube must already be band-filtered and normalized.
// resume_checkpoint, when non-empty, restores model, optimizer and loop
// state and continues up to cfg.epochs.
TrainResult train(const HsiCube& cube, const LabelMap& labels,
                  const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::string& checkpoint_out = "",
                  const std::string& resume_checkpoint = "");

}  // namespace mshc
