#include "mshc/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mshc/errors.hpp"
#include "mshc/rng.hpp"

namespace mshc {

using nlohmann::json;

void ModelConfig::validate() const {
  if (bands < 1) throw ConfigError("model: bands must be >= 1");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (!enable_g && !enable_c && !enable_n && !enable_s) {
    throw ConfigError("model: at least one stream must be enabled");
  }
  if (g_widths.empty()) throw ConfigError("model: g_widths empty");
  if (c_channels.size() != c_kernels.size() || c_channels.empty()) {
    throw ConfigError("model: c_channels and c_kernels must align");
  }
  for (i64 k : c_kernels) {
    if (k < 1 || k % 2 == 0) {
      throw ConfigError("model: c-stream kernels must be odd, got " +
                        std::to_string(k));
    }
  }
  if (n_extractor_channels < 1 || n_patch_radius < 0 || n_projection < 1) {
    throw ConfigError("model: bad n-stream configuration");
  }
  if (s_projection < 1) throw ConfigError("model: bad s-stream projection");
  if (fusion_hidden.empty()) throw ConfigError("model: fusion_hidden empty");
  if (knn.k < 1) throw ConfigError("model: knn.k must be >= 1");
}

i64 ModelConfig::fusion_input_width() const {
  i64 w = 0;
  if (enable_g) w += g_output_width();
  if (enable_c) w += c_output_width();
  if (enable_n) w += n_output_width();
  if (enable_s) w += s_output_width();
  return w;
}

json ModelConfig::to_json() const {
  json j;
  j["bands"] = bands;
  j["num_classes"] = num_classes;
  j["g_widths"] = g_widths;
  j["c_channels"] = c_channels;
  j["c_kernels"] = c_kernels;
  j["n_extractor_channels"] = n_extractor_channels;
  j["n_patch_radius"] = n_patch_radius;
  j["n_projection"] = n_projection;
  j["s_projection"] = s_projection;
  j["fusion_hidden"] = fusion_hidden;
  j["streams"] = {{"g", enable_g}, {"c", enable_c}, {"n", enable_n},
                  {"s", enable_s}};
  j["shared_gcn_trunk"] = shared_gcn_trunk;
  j["propagation"] = propagation == Propagation::Laplacian
                         ? "laplacian"
                         : "renorm_adjacency";
  j["normalize"] = to_string(normalize);
  j["knn"] = {{"k", knn.k},
              {"feature_space",
               knn.feature_space == GraphFeatureSpace::Spectral
                   ? "spectral"
                   : "spectral_spatial"},
              {"spatial_scale", knn.spatial_scale},
              {"max_nodes", knn.max_nodes}};
  return j;
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const char* context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(std::string("unknown key \"") + it.key() + "\" in " +
                        context);
    }
  }
}

}  // namespace

ModelConfig ModelConfig::from_json(const json& j) {
  reject_unknown_keys(
      j,
      {"bands", "num_classes", "g_widths", "c_channels", "c_kernels",
       "n_extractor_channels", "n_patch_radius", "n_projection",
       "s_projection", "fusion_hidden", "streams", "shared_gcn_trunk",
       "propagation", "normalize", "knn"},
      "model config");
  ModelConfig c;
  try {
    c.bands = j.value("bands", i64(0));
    c.num_classes = j.value("num_classes", i64(0));
    if (j.contains("g_widths"))
      c.g_widths = j.at("g_widths").get<std::vector<i64>>();
    if (j.contains("c_channels"))
      c.c_channels = j.at("c_channels").get<std::vector<i64>>();
    if (j.contains("c_kernels"))
      c.c_kernels = j.at("c_kernels").get<std::vector<i64>>();
    if (j.contains("n_extractor_channels"))
      c.n_extractor_channels = j.at("n_extractor_channels").get<i64>();
    if (j.contains("n_patch_radius"))
      c.n_patch_radius = j.at("n_patch_radius").get<int>();
    if (j.contains("n_projection"))
      c.n_projection = j.at("n_projection").get<i64>();
    if (j.contains("s_projection"))
      c.s_projection = j.at("s_projection").get<i64>();
    if (j.contains("fusion_hidden"))
      c.fusion_hidden = j.at("fusion_hidden").get<std::vector<i64>>();
    if (j.contains("streams")) {
      const auto& s = j.at("streams");
      reject_unknown_keys(s, {"g", "c", "n", "s"}, "model.streams");
      c.enable_g = s.value("g", true);
      c.enable_c = s.value("c", true);
      c.enable_n = s.value("n", true);
      c.enable_s = s.value("s", true);
    }
    if (j.contains("shared_gcn_trunk"))
      c.shared_gcn_trunk = j.at("shared_gcn_trunk").get<bool>();
    if (j.contains("propagation")) {
      const std::string p = j.at("propagation").get<std::string>();
      if (p == "laplacian") {
        c.propagation = Propagation::Laplacian;
      } else if (p == "renorm_adjacency") {
        c.propagation = Propagation::RenormAdjacency;
      } else {
        throw ConfigError("model: unknown propagation \"" + p + "\"");
      }
    }
    if (j.contains("normalize")) {
      c.normalize =
          normalize_mode_from_string(j.at("normalize").get<std::string>());
    }
    if (j.contains("knn")) {
      const auto& k = j.at("knn");
      reject_unknown_keys(k, {"k", "feature_space", "spatial_scale",
                              "max_nodes"},
                          "model.knn");
      c.knn.k = k.value("k", 10);
      const std::string fs = k.value("feature_space", "spectral");
      if (fs == "spectral") {
        c.knn.feature_space = GraphFeatureSpace::Spectral;
      } else if (fs == "spectral_spatial") {
        c.knn.feature_space = GraphFeatureSpace::SpectralSpatial;
      } else {
        throw ConfigError("model: unknown knn feature space \"" + fs + "\"");
      }
      c.knn.spatial_scale = k.value("spatial_scale", real(1));
      c.knn.max_nodes = k.value("max_nodes", i64(65536));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  // bands/num_classes may still be unset here; they are filled from the data
  // and validated before use
  if (c.bands > 0 && c.num_classes > 0) c.validate();
  return c;
}

namespace {

// Glorot-uniform init in +-sqrt(6 / (fan_in + fan_out)).
std::vector<real> glorot(Rng& rng, i64 fan_in, i64 fan_out, i64 count) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<real> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-limit, limit));
  return v;
}

GraphConvLayer make_gcn_layer(Rng& rng, i64 c_in, i64 c_out) {
  GraphConvLayer l;
  l.bn = BatchNorm(c_in);
  l.weight = Tensor::param({c_in, c_out}, glorot(rng, c_in, c_out,
                                                 c_in * c_out));
  l.bias = Tensor::param({c_out}, std::vector<real>(c_out, real(0)));
  return l;
}

ConvBlock make_conv_block(Rng& rng, i64 kh, i64 kw, i64 ci, i64 co) {
  ConvBlock b;
  b.kernel = Tensor::param(
      {kh, kw, ci, co}, glorot(rng, kh * kw * ci, kh * kw * co,
                               kh * kw * ci * co));
  b.bn = BatchNorm(co);
  return b;
}

DenseLayer make_dense(Rng& rng, i64 c_in, i64 c_out) {
  DenseLayer d;
  d.weight =
      Tensor::param({c_in, c_out}, glorot(rng, c_in, c_out, c_in * c_out));
  d.bias = Tensor::param({c_out}, std::vector<real>(c_out, real(0)));
  return d;
}

void collect_bn(std::vector<Param>& params, std::vector<NamedBuffer>& bufs,
                const std::string& prefix, BatchNorm& bn) {
  params.push_back({prefix + ".gamma", bn.gamma, false});
  params.push_back({prefix + ".beta", bn.beta, false});
  bufs.push_back({prefix + ".running_mean", &bn.running_mean});
  bufs.push_back({prefix + ".running_var", &bn.running_var});
}

void collect_gcn(std::vector<Param>& params, std::vector<NamedBuffer>& bufs,
                 const std::string& prefix, std::vector<GraphConvLayer>& gcn) {
  for (std::size_t l = 0; l < gcn.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    collect_bn(params, bufs, base + ".bn", gcn[l].bn);
    params.push_back({base + ".W", gcn[l].weight, true});
    params.push_back({base + ".b", gcn[l].bias, false});
  }
}

}  // namespace

ModelState ModelState::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState st;
  st.config = config;
  st.seed = seed;
  Rng rng(seed);

  if (config.needs_gcn_trunk()) {
    i64 c_in = config.bands;
    for (i64 w : config.g_widths) {
      st.gcn.push_back(make_gcn_layer(rng, c_in, w));
      c_in = w;
    }
    if (!config.shared_gcn_trunk && config.enable_s && config.enable_g) {
      c_in = config.bands;
      for (i64 w : config.g_widths) {
        st.gcn_s.push_back(make_gcn_layer(rng, c_in, w));
        c_in = w;
      }
    }
  }
  if (config.enable_c) {
    i64 ci = config.bands;
    for (std::size_t i = 0; i < config.c_channels.size(); ++i) {
      st.c_blocks.push_back(make_conv_block(rng, config.c_kernels[i],
                                            config.c_kernels[i], ci,
                                            config.c_channels[i]));
      ci = config.c_channels[i];
    }
  }
  if (config.enable_n) {
    st.n_extractor =
        make_conv_block(rng, 3, 3, config.bands, config.n_extractor_channels);
    st.n_bn = BatchNorm(config.n_extractor_channels);
    const i64 f2 = config.n_extractor_channels * config.n_extractor_channels;
    st.n_proj = make_dense(rng, f2, config.n_projection);
  }
  if (config.enable_s) {
    st.s_proj = make_dense(rng, config.g_widths.back(), config.s_projection);
  }
  i64 c_in = config.fusion_input_width();
  for (i64 w : config.fusion_hidden) {
    st.fusion.push_back(make_dense(rng, c_in, w));
    st.fusion_bn.emplace_back(w);
    c_in = w;
  }
  st.fusion.push_back(make_dense(rng, c_in, config.num_classes));
  return st;
}

std::vector<Param> ModelState::parameters() {
  std::vector<Param> params;
  std::vector<NamedBuffer> bufs;
  collect_gcn(params, bufs, "gcn", gcn);
  collect_gcn(params, bufs, "gcn_s", gcn_s);
  for (std::size_t i = 0; i < c_blocks.size(); ++i) {
    const std::string base = "c." + std::to_string(i);
    params.push_back({base + ".kernel", c_blocks[i].kernel, true});
    collect_bn(params, bufs, base + ".bn", c_blocks[i].bn);
  }
  if (n_extractor) {
    params.push_back({"n.extractor.kernel", n_extractor->kernel, true});
    collect_bn(params, bufs, "n.extractor.bn", n_extractor->bn);
    collect_bn(params, bufs, "n.bn", *n_bn);
    params.push_back({"n.proj.W", n_proj.weight, true});
    params.push_back({"n.proj.b", n_proj.bias, false});
  }
  if (s_proj.weight.defined()) {
    params.push_back({"s.proj.W", s_proj.weight, true});
    params.push_back({"s.proj.b", s_proj.bias, false});
  }
  for (std::size_t i = 0; i < fusion.size(); ++i) {
    const std::string base = "fusion." + std::to_string(i);
    params.push_back({base + ".W", fusion[i].weight, true});
    params.push_back({base + ".b", fusion[i].bias, false});
    if (i < fusion_bn.size()) collect_bn(params, bufs, base + ".bn",
                                         fusion_bn[i]);
  }
  return params;
}

std::vector<NamedBuffer> ModelState::buffers() {
  std::vector<Param> params;
  std::vector<NamedBuffer> bufs;
  collect_gcn(params, bufs, "gcn", gcn);
  collect_gcn(params, bufs, "gcn_s", gcn_s);
  for (std::size_t i = 0; i < c_blocks.size(); ++i) {
    collect_bn(params, bufs, "c." + std::to_string(i) + ".bn",
               c_blocks[i].bn);
  }
  if (n_extractor) {
    collect_bn(params, bufs, "n.extractor.bn", n_extractor->bn);
    collect_bn(params, bufs, "n.bn", *n_bn);
  }
  for (std::size_t i = 0; i < fusion_bn.size(); ++i) {
    collect_bn(params, bufs, "fusion." + std::to_string(i) + ".bn",
               fusion_bn[i]);
  }
  return bufs;
}

i64 ModelState::parameter_count() {
  i64 total = 0;
  for (const Param& p : parameters()) total += p.tensor.size();
  return total;
}

void ModelState::zero_grads() {
  for (Param& p : parameters()) p.tensor.zero_grad();
}

namespace {

SparseMatrixPtr propagation_matrix(const ModelConfig& cfg,
                                   const KnnGraph& graph) {
  if (cfg.propagation == Propagation::Laplacian) return graph.laplacian;
  return std::make_shared<SparseMatrix>(graph.renorm_adjacency());
}

}  // namespace

Tensor run_g_stream(const Tensor& node_features, const KnnGraph& graph,
                    ModelState& state, bool training, Tensor* pre_pool) {
  if (node_features.dim(0) != graph.n) {
    throw DimensionError("g-stream: " + std::to_string(node_features.dim(0)) +
                         " pixels vs graph with " + std::to_string(graph.n) +
                         " nodes");
  }
  SparseMatrixPtr prop = propagation_matrix(state.config, graph);
  Tensor h = node_features;
  for (std::size_t l = 0; l < state.gcn.size(); ++l) {
    h = graph_conv_forward(h, state.gcn[l], prop, training);
    if (l + 1 < state.gcn.size()) h = relu(h);
  }
  if (pre_pool) *pre_pool = h;
  return graph_neighbor_maxpool(h, graph);
}

Tensor run_c_stream(const Tensor& cube, ModelState& state, bool training) {
  Tensor y = cube;
  for (ConvBlock& block : state.c_blocks) {
    y = conv_block_forward(y, block, training);
  }
  return reshape(y, {y.dim(0) * y.dim(1), y.dim(2)});
}

Tensor run_n_stream(const Tensor& cube, ModelState& state, bool training) {
  Tensor first = conv_block_forward(cube, *state.n_extractor, training);
  first = batch_norm(first, *state.n_bn, 2, training);
  Tensor pooled = pixel_sop_raw(first, state.config.n_patch_radius);
  pooled = signed_sqrt(pooled);
  return add_rowvec(matmul(pooled, state.n_proj.weight), state.n_proj.bias);
}

Tensor run_s_stream(const Tensor& h_pre_pool, const KnnGraph& graph,
                    ModelState& state, bool training) {
  (void)training;
  Tensor projected = add_rowvec(matmul(h_pre_pool, state.s_proj.weight),
                                state.s_proj.bias);
  return gsop(projected, graph, GsopMode::PerNode);
}

Tensor fuse_and_classify(const StreamOutputs& outs, ModelState& state,
                         bool training) {
  std::vector<Tensor> parts;
  if (outs.h_g.defined()) parts.push_back(outs.h_g);
  if (outs.h_c.defined()) parts.push_back(outs.h_c);
  if (outs.h_n.defined()) parts.push_back(outs.h_n);
  if (outs.h_s.defined()) parts.push_back(outs.h_s);
  if (parts.empty()) throw ContractError("fusion: no stream outputs");
  Tensor h = parts.size() == 1 ? parts[0] : concat(parts, 1);
  if (h.dim(1) != state.config.fusion_input_width()) {
    throw DimensionError("fusion: input width " + std::to_string(h.dim(1)) +
                         " != configured " +
                         std::to_string(state.config.fusion_input_width()));
  }
  for (std::size_t i = 0; i < state.fusion.size(); ++i) {
    h = add_rowvec(matmul(h, state.fusion[i].weight), state.fusion[i].bias);
    if (i < state.fusion_bn.size()) {
      h = batch_norm(h, state.fusion_bn[i], 1, training);
      h = leaky_relu(h);
    }
  }
  return h;
}

Tensor cross_entropy_loss(const Tensor& logits,
                          const std::vector<std::uint16_t>& labels,
                          const std::vector<i64>& pixels) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy: logits must be [n x P]");
  }
  const i64 n = logits.dim(0), p = logits.dim(1);
  if (static_cast<i64>(labels.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels vs " + std::to_string(n) + " rows");
  }
  if (pixels.empty()) {
    throw ContractError("cross_entropy: no labeled pixel in batch");
  }
  for (i64 px : pixels) {
    if (px < 0 || px >= n) {
      throw ContractError("cross_entropy: pixel " + std::to_string(px) +
                          " out of range");
    }
    if (labels[px] < 1 || labels[px] > p) {
      throw ContractError("cross_entropy: pixel " + std::to_string(px) +
                          " has label " + std::to_string(labels[px]) +
                          " outside 1.." + std::to_string(p));
    }
  }

  Tape* tape = detail::recording_tape({&logits});
  const real inv_count = real(1) / static_cast<real>(pixels.size());
  // softmax probabilities of the selected rows, kept for the backward rule
  auto probs = std::make_shared<std::vector<real>>(pixels.size() * p);
  real loss = 0;
  for (std::size_t s = 0; s < pixels.size(); ++s) {
    const real* row = logits.data().data() + pixels[s] * p;
    real mx = row[0];
    for (i64 j = 1; j < p; ++j) mx = std::max(mx, row[j]);
    real denom = 0;
    for (i64 j = 0; j < p; ++j) denom += std::exp(row[j] - mx);
    const real lse = mx + std::log(denom);
    loss += lse - row[labels[pixels[s]] - 1];
    for (i64 j = 0; j < p; ++j) {
      (*probs)[s * p + j] = std::exp(row[j] - mx) / denom;
    }
  }
  loss *= inv_count;

  Tensor y = Tensor::op_output(Shape{}, {loss}, tape);
  if (tape) {
    auto sel = std::make_shared<std::vector<i64>>(pixels);
    auto tgt = std::make_shared<std::vector<i64>>();
    tgt->reserve(pixels.size());
    for (i64 px : pixels) tgt->push_back(labels[px] - 1);
    tape->record([ln = logits.node(), yn = y.node(), probs, sel, tgt, p,
                  inv_count] {
      if (!ln->tracked) return;
      const real g = yn->grad[0] * inv_count;
      for (std::size_t s = 0; s < sel->size(); ++s) {
        real* grow = ln->grad.data() + (*sel)[s] * p;
        const real* prow = probs->data() + s * p;
        for (i64 j = 0; j < p; ++j) grow[j] += g * prow[j];
        grow[(*tgt)[s]] -= g;
      }
    });
  }
  return y;
}

ForwardResult forward_full(const Tensor& cube, const KnnGraph& graph,
                           const std::vector<std::uint16_t>& labels,
                           const std::vector<i64>& loss_pixels,
                           ModelState& state, bool training) {
  const ModelConfig& cfg = state.config;
  if (cube.rank() != 3 || cube.dim(2) != cfg.bands) {
    throw DimensionError("forward: cube " + shape_str(cube.shape()) +
                         " does not match configured bands " +
                         std::to_string(cfg.bands));
  }
  const i64 n = cube.dim(0) * cube.dim(1);
  if (graph.n != n) {
    throw DimensionError("forward: graph nodes " + std::to_string(graph.n) +
                         " != pixels " + std::to_string(n));
  }

  ForwardResult out;
  Tensor pre_pool;
  if (cfg.needs_gcn_trunk()) {
    Tensor nodes = reshape(cube, {n, cfg.bands});
    SparseMatrixPtr prop = propagation_matrix(cfg, graph);
    auto run_trunk = [&](std::vector<GraphConvLayer>& layers) {
      Tensor h = nodes;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        h = graph_conv_forward(h, layers[l], prop, training);
        if (l + 1 < layers.size()) h = relu(h);
      }
      return h;
    };
    if (cfg.enable_g) {
      pre_pool = run_trunk(state.gcn);
      out.streams.h_g = graph_neighbor_maxpool(pre_pool, graph);
      if (cfg.enable_s && !cfg.shared_gcn_trunk) {
        pre_pool = run_trunk(state.gcn_s);
      }
    } else {
      pre_pool = run_trunk(state.gcn);  // trunk exists for S alone
    }
  }
  if (cfg.enable_c) out.streams.h_c = run_c_stream(cube, state, training);
  if (cfg.enable_n) out.streams.h_n = run_n_stream(cube, state, training);
  if (cfg.enable_s) {
    out.streams.h_s = run_s_stream(pre_pool, graph, state, training);
  }
  out.logits = fuse_and_classify(out.streams, state, training);
  if (!loss_pixels.empty()) {
    out.loss = cross_entropy_loss(out.logits, labels, loss_pixels);
  }
  return out;
}

std::vector<int> predict_classes(const Tensor& logits) {
  const i64 n = logits.dim(0), p = logits.dim(1);
  std::vector<int> pred(static_cast<std::size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    const real* row = logits.data().data() + i * p;
    int best = 0;
    for (i64 j = 1; j < p; ++j) {
      if (row[j] > row[best]) best = static_cast<int>(j);
    }
    pred[i] = best + 1;
  }
  return pred;
}

}  // namespace mshc
