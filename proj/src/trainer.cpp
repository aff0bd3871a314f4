#include "mshc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mshc/errors.hpp"

namespace mshc {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (minibatch_size < 1) throw ConfigError("train: minibatch must be >= 1");
  if (lr_initial <= 0) throw ConfigError("train: lr must be positive");
  if (lr_decay_factor <= 0 || lr_decay_factor > 1) {
    throw ConfigError("train: decay factor must be in (0, 1]");
  }
  if (lr_decay_every < 1) throw ConfigError("train: decay interval >= 1");
  if (weight_reg < 0) throw ConfigError("train: negative weight_reg");
  if (patch_size < 3 || patch_size % 2 == 0) {
    throw ConfigError("train: patch size must be odd and >= 3");
  }
  if (clip_norm < 0) throw ConfigError("train: negative clip norm");
}

json TrainConfig::to_json() const {
  json j;
  j["epochs"] = epochs;
  j["minibatch_size"] = minibatch_size;
  j["lr_initial"] = lr_initial;
  j["lr_decay_factor"] = lr_decay_factor;
  j["lr_decay_every"] = lr_decay_every;
  j["weight_reg"] = weight_reg;
  j["seed"] = seed;
  j["batch_unit"] = batch_unit == BatchUnit::NodeBatch ? "node_batch" : "patch";
  j["patch_size"] = patch_size;
  j["optimizer"] = optimizer == OptimizerKind::Adam ? "adam" : "momentum_sgd";
  j["clip_norm"] = clip_norm;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> allowed = {
      "epochs",     "minibatch_size", "lr_initial", "lr_decay_factor",
      "lr_decay_every", "weight_reg", "seed",       "batch_unit",
      "patch_size", "optimizer",      "clip_norm"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key \"" + it.key() + "\" in train config");
    }
  }
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
    c.lr_initial = j.value("lr_initial", c.lr_initial);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
    c.weight_reg = j.value("weight_reg", c.weight_reg);
    c.seed = j.value("seed", c.seed);
    if (j.contains("batch_unit")) {
      const std::string u = j.at("batch_unit").get<std::string>();
      if (u == "node_batch") {
        c.batch_unit = BatchUnit::NodeBatch;
      } else if (u == "patch") {
        c.batch_unit = BatchUnit::Patch;
      } else {
        throw ConfigError("train: unknown batch unit \"" + u + "\"");
      }
    }
    c.patch_size = j.value("patch_size", c.patch_size);
    if (j.contains("optimizer")) {
      const std::string o = j.at("optimizer").get<std::string>();
      if (o == "adam") {
        c.optimizer = OptimizerKind::Adam;
      } else if (o == "momentum_sgd") {
        c.optimizer = OptimizerKind::MomentumSgd;
      } else {
        throw ConfigError("train: unknown optimizer \"" + o + "\"");
      }
    }
    c.clip_norm = j.value("clip_norm", c.clip_norm);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

real lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ContractError("lr_at_epoch: epoch " + std::to_string(epoch) +
                        " outside 0.." + std::to_string(cfg.epochs - 1));
  }
  const int steps = epoch / cfg.lr_decay_every;
  real lr = cfg.lr_initial;
  for (int i = 0; i < steps; ++i) lr *= cfg.lr_decay_factor;
  return lr;
}

std::vector<std::vector<i64>> make_batches(const std::vector<i64>& pixels,
                                           const TrainConfig& cfg, Rng& rng) {
  if (pixels.empty()) throw ContractError("make_batches: empty train set");
  std::vector<i64> order = pixels;
  rng.shuffle(order);
  std::vector<std::vector<i64>> batches;
  for (std::size_t at = 0; at < order.size();
       at += static_cast<std::size_t>(cfg.minibatch_size)) {
    const std::size_t end = std::min(
        order.size(), at + static_cast<std::size_t>(cfg.minibatch_size));
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

void TrainReport::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FileError("cannot open " + path + " for writing");
  f << "epoch,step,lr,loss,train_oa\n";
  char buf[96];
  for (std::size_t i = 0; i < step_loss.size(); ++i) {
    const bool epoch_end =
        i + 1 == step_loss.size() || step_epoch[i + 1] != step_epoch[i];
    f << step_epoch[i] << ',' << i << ',';
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(step_lr[i]));
    f << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", step_loss[i]);
    f << buf << ',';
    if (epoch_end &&
        static_cast<std::size_t>(step_epoch[i]) < epoch_train_oa.size()) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    epoch_train_oa[static_cast<std::size_t>(step_epoch[i])]);
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw FileError("short write on " + path);
}

namespace {

struct OptimizerState {
  std::vector<std::vector<real>> m;  // first moment / sgd velocity
  std::vector<std::vector<real>> v;  // second moment (adam)
  i64 step = 0;
};

OptimizerState make_optimizer_state(std::vector<Param>& params) {
  OptimizerState s;
  for (Param& p : params) {
    s.m.emplace_back(p.tensor.size(), real(0));
    s.v.emplace_back(p.tensor.size(), real(0));
  }
  return s;
}

void clip_gradients(std::vector<Param>& params, real clip) {
  if (clip <= 0) return;
  real sq = 0;
  for (Param& p : params) {
    for (real g : p.tensor.grad()) sq += g * g;
  }
  const real norm = std::sqrt(sq);
  if (norm <= clip) return;
  const real s = clip / norm;
  for (Param& p : params) {
    for (real& g : p.tensor.mutable_grad()) g *= s;
  }
}

void apply_update(std::vector<Param>& params, OptimizerState& opt,
                  const TrainConfig& cfg, real lr) {
  ++opt.step;
  if (cfg.optimizer == OptimizerKind::Adam) {
    const real b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const real bc1 =
        real(1) - std::pow(b1, static_cast<real>(opt.step));
    const real bc2 =
        real(1) - std::pow(b2, static_cast<real>(opt.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& theta = params[pi].tensor.mutable_data();
      const auto& g = params[pi].tensor.grad();
      auto& m = opt.m[pi];
      auto& v = opt.v[pi];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = b1 * m[i] + (real(1) - b1) * g[i];
        v[i] = b2 * v[i] + (real(1) - b2) * g[i] * g[i];
        const real mhat = m[i] / bc1;
        const real vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      }
    }
  } else {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& theta = params[pi].tensor.mutable_data();
      const auto& g = params[pi].tensor.grad();
      auto& vel = opt.m[pi];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        vel[i] = cfg.sgd_momentum * vel[i] - lr * g[i];
        theta[i] += vel[i];
      }
    }
  }
}

// reg * sum over weights of |W|^2, as tape ops so the penalty participates
// in backward
Tensor weight_penalty(std::vector<Param>& params, real reg) {
  Tensor acc;
  for (Param& p : params) {
    if (!p.regularized) continue;
    Tensor term = reduce_sum(mul(p.tensor, p.tensor));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, reg);
}

std::string param_norm_diagnostics(std::vector<Param>& params) {
  std::string out;
  for (Param& p : params) {
    real sq = 0;
    for (real v : p.tensor.data()) sq += v * v;
    const real norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      out += (out.empty() ? "" : ", ") + p.name + " norm=" +
             std::to_string(static_cast<double>(norm));
    }
  }
  if (out.empty()) out = "all parameter norms finite";
  return out;
}

struct PatchView {
  Tensor cube;                       // [ph x pw x B]
  std::vector<std::uint16_t> labels;  // local grid
  i64 center_local = 0;
};

PatchView extract_patch(const HsiCube& cube, const LabelMap& labels,
                        i64 center, int patch_size) {
  const int radius = (patch_size - 1) / 2;
  const i64 cr = center / cube.cols, cc = center % cube.cols;
  const i64 r0 = std::max<i64>(0, cr - radius);
  const i64 r1 = std::min<i64>(cube.rows - 1, cr + radius);
  const i64 c0 = std::max<i64>(0, cc - radius);
  const i64 c1 = std::min<i64>(cube.cols - 1, cc + radius);
  const i64 ph = r1 - r0 + 1, pw = c1 - c0 + 1;
  std::vector<real> values(static_cast<std::size_t>(ph * pw * cube.bands));
  std::vector<std::uint16_t> lgrid(static_cast<std::size_t>(ph * pw));
  for (i64 r = 0; r < ph; ++r) {
    for (i64 c = 0; c < pw; ++c) {
      const i64 src = ((r0 + r) * cube.cols + (c0 + c));
      std::copy(cube.values.begin() + src * cube.bands,
                cube.values.begin() + (src + 1) * cube.bands,
                values.begin() + (r * pw + c) * cube.bands);
      lgrid[r * pw + c] = labels.grid[src];
    }
  }
  PatchView pv;
  pv.cube = Tensor({ph, pw, cube.bands}, std::move(values));
  pv.labels = std::move(lgrid);
  pv.center_local = (cr - r0) * pw + (cc - c0);
  return pv;
}

double train_oa_now(const Tensor& cube_t, const KnnGraph& graph,
                    const LabelMap& labels, ModelState& state) {
  ForwardResult r = forward_full(cube_t, graph, labels.grid, {}, state, false);
  const std::vector<int> pred = predict_classes(r.logits);
  i64 hit = 0, total = 0;
  for (i64 px = 0; px < static_cast<i64>(labels.train_mask.size()); ++px) {
    if (!labels.train_mask[px]) continue;
    ++total;
    if (pred[px] == labels.grid[px]) ++hit;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TrainResult train(const HsiCube& cube, const LabelMap& labels,
                  const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::string& checkpoint_out,
                  const std::string& resume_checkpoint) {
  cfg.validate();
  model_cfg.validate();
  labels.validate();
  if (cube.rows != labels.rows || cube.cols != labels.cols) {
    throw DimensionError("train: cube and labels extents disagree");
  }
  if (cube.bands != model_cfg.bands) {
    throw MismatchError("train: cube has " + std::to_string(cube.bands) +
                        " bands, model expects " +
                        std::to_string(model_cfg.bands));
  }
  const std::vector<i64> train_pixels = labels.train_pixels();
  if (train_pixels.empty()) throw ContractError("train: empty train mask");

  const auto t_start = std::chrono::steady_clock::now();

  const Tensor cube_t = cube.to_tensor();
  KnnGraph graph;
  if (cfg.batch_unit == BatchUnit::NodeBatch) {
    graph = build_knn_graph(graph_features(cube_t, model_cfg.knn),
                            model_cfg.knn);
  }

  ModelState state = ModelState::init(model_cfg, cfg.seed);
  Rng rng(cfg.seed);
  auto params = state.parameters();
  OptimizerState opt = make_optimizer_state(params);
  int start_epoch = 0;
  i64 global_step = 0;

  if (!resume_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_checkpoint);
    state = restore_model(ckpt);
    params = state.parameters();
    opt = make_optimizer_state(params);
    if (ckpt.has_snapshot) {
      start_epoch = ckpt.snapshot.epochs_completed;
      global_step = ckpt.snapshot.global_step;
      opt.step = global_step;
      rng.deserialize(ckpt.snapshot.rng_state);
    }
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto mit = ckpt.records.find("opt.m." + params[pi].name);
      auto vit = ckpt.records.find("opt.v." + params[pi].name);
      if (mit != ckpt.records.end()) opt.m[pi] = mit->second.data;
      if (vit != ckpt.records.end()) opt.v[pi] = vit->second.data;
    }
  }

  TrainReport report;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const real lr = lr_at_epoch(cfg, epoch);
    const auto batches = make_batches(train_pixels, cfg, rng);
    double loss_sum = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Tape tape;
      TapeScope scope_guard(tape);
      Tensor loss;
      if (cfg.batch_unit == BatchUnit::NodeBatch) {
        loss = forward_full(cube_t, graph, labels.grid, batches[bi], state,
                            true)
                   .loss;
      } else {
        Tensor acc;
        for (i64 center : batches[bi]) {
          PatchView pv = extract_patch(cube, labels, center, cfg.patch_size);
          KnnGraph pg = build_knn_graph(graph_features(pv.cube, model_cfg.knn),
                                        model_cfg.knn);
          ForwardResult r = forward_full(pv.cube, pg, pv.labels,
                                         {pv.center_local}, state, true);
          acc = acc.defined() ? add(acc, r.loss) : r.loss;
        }
        loss = scale(acc, real(1) / static_cast<real>(batches[bi].size()));
      }
      if (cfg.weight_reg > 0) {
        loss = add(loss, weight_penalty(params, cfg.weight_reg));
      }
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(bi) + "; " +
                           param_norm_diagnostics(params));
      }
      backward(loss);
      clip_gradients(params, cfg.clip_norm);
      apply_update(params, opt, cfg, lr);
      state.zero_grads();
      ++global_step;
      loss_sum += loss_value;
      report.step_loss.push_back(loss_value);
      report.step_lr.push_back(lr);
      report.step_epoch.push_back(epoch);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(batches.size()));
    report.epoch_lr.push_back(lr);
    if (cfg.batch_unit == BatchUnit::NodeBatch) {
      report.epoch_train_oa.push_back(
          train_oa_now(cube_t, graph, labels, state));
    } else {
      report.epoch_train_oa.push_back(0.0);
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  if (!checkpoint_out.empty()) {
    TrainerSnapshot snap;
    snap.epochs_completed = cfg.epochs;
    snap.global_step = global_step;
    snap.rng_state = rng.serialize();
    std::map<std::string, CheckpointRecord> extra;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      extra["opt.m." + params[pi].name] = {params[pi].tensor.shape(),
                                           opt.m[pi]};
      extra["opt.v." + params[pi].name] = {params[pi].tensor.shape(),
                                           opt.v[pi]};
    }
    save_checkpoint(checkpoint_out, state, &snap, &extra);
    report.checkpoint_path = checkpoint_out;
  }

  return {std::move(state), std::move(report)};
}

}  // namespace mshc
