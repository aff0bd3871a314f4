#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mshc/data.hpp"
#include "mshc/graph.hpp"
#include "mshc/layers.hpp"

namespace mshc {

enum class Propagation { Laplacian, RenormAdjacency };

struct ModelConfig {
  i64 bands = 0;        // B
  i64 num_classes = 0;  // P
  std::vector<i64> g_widths{64, 32};
  std::vector<i64> c_channels{32, 64, 128};
  std::vector<i64> c_kernels{3, 3, 1};
  i64 n_extractor_channels = 32;
  int n_patch_radius = 2;
  i64 n_projection = 128;
  i64 s_projection = 16;
  std::vector<i64> fusion_hidden{512, 128};
  bool enable_g = true;
  bool enable_c = true;
  bool enable_n = true;
  bool enable_s = true;
  bool shared_gcn_trunk = true;
  Propagation propagation = Propagation::Laplacian;
  NormalizeMode normalize = NormalizeMode::PerBandZscore;
  GraphConfig knn;

  void validate() const;
  i64 g_output_width() const { return g_widths.back(); }
  i64 c_output_width() const { return c_channels.back(); }
  i64 n_output_width() const { return n_projection; }
  i64 s_output_width() const { return s_projection * s_projection; }
  i64 fusion_input_width() const;
  bool needs_gcn_trunk() const { return enable_g || enable_s; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

// Named handle onto one parameter tensor; regularized marks the weights the
// squared-magnitude penalty applies to.
struct Param {
  std::string name;
  Tensor tensor;
  bool regularized = false;
};

// Named handle onto a non-learnable state vector (BN running statistics).
struct NamedBuffer {
  std::string name;
  std::vector<real>* data;
};

struct ModelState {
  ModelConfig config;
  std::uint64_t seed = 0;

  std::vector<GraphConvLayer> gcn;    // shared trunk (G and/or S)
  std::vector<GraphConvLayer> gcn_s;  // private S trunk when not shared
  std::vector<ConvBlock> c_blocks;
  std::optional<ConvBlock> n_extractor;
  std::optional<BatchNorm> n_bn;
  DenseLayer n_proj;
  DenseLayer s_proj;
  std::vector<DenseLayer> fusion;   // hidden layers + final P layer
  std::vector<BatchNorm> fusion_bn;  // one per hidden layer

  static ModelState init(const ModelConfig& config, std::uint64_t seed);

  std::vector<Param> parameters();
  std::vector<NamedBuffer> buffers();
  i64 parameter_count();
  void zero_grads();
};

struct StreamOutputs {
  Tensor h_g;
  Tensor h_c;
  Tensor h_n;
  Tensor h_s;
};

struct ForwardResult {
  StreamOutputs streams;
  Tensor logits;  // [n, P]
  Tensor loss;    // defined only when loss pixels were given
};

// G-stream: stacked graph convolutions (ReLU between layers) then neighbor
// max-pooling. pre_pool, when requested, receives the activation before the
// pooling step (the S-stream input).
Tensor run_g_stream(const Tensor& node_features, const KnnGraph& graph,
                    ModelState& state, bool training,
                    Tensor* pre_pool = nullptr);

// C-stream: the three convolutional blocks over the full raster, flattened
// to [n, c].
Tensor run_c_stream(const Tensor& cube, ModelState& state, bool training);

// N-stream: first-order extractor block, batch norm, per-pixel SOP over a
// square patch, signed sqrt, learned projection.
Tensor run_n_stream(const Tensor& cube, ModelState& state, bool training);

// S-stream: projection of the GCN trunk output, per-node GSOP.
Tensor run_s_stream(const Tensor& h_pre_pool, const KnnGraph& graph,
                    ModelState& state, bool training);

// Concatenation of the enabled streams through the per-pixel MLP head.
Tensor fuse_and_classify(const StreamOutputs& outs, ModelState& state,
                         bool training);

// Mean cross-entropy over the given pixels. labels holds per-pixel class ids
// (0 = unlabeled); every listed pixel must be labeled.
Tensor cross_entropy_loss(const Tensor& logits,
                          const std::vector<std::uint16_t>& labels,
                          const std::vector<i64>& pixels);

// Full forward pass over one raster. loss_pixels may be empty for
// inference-only calls; the returned loss is then undefined.
ForwardResult forward_full(const Tensor& cube, const KnnGraph& graph,
                           const std::vector<std::uint16_t>& labels,
                           const std::vector<i64>& loss_pixels,
                           ModelState& state, bool training);

// argmax class per row, 1-based.
std::vector<int> predict_classes(const Tensor& logits);

}  // namespace mshc
