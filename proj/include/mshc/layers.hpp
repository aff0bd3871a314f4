#pragma once

#include "mshc/graph.hpp"
#include "mshc/tensor.hpp"

namespace mshc {

// Batch normalization state over one feature axis. gamma/beta are learnable;
// running statistics feed eval mode.
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<real> running_mean;
  std::vector<real> running_var;
  real eps = real(1e-5);
  real momentum = real(0.9);

  BatchNorm() = default;
  explicit BatchNorm(i64 features);
  i64 features() const { return gamma.defined() ? gamma.size() : 0; }
};

// In train mode normalizes by batch statistics and updates the running ones;
// in eval mode normalizes by the running statistics. Scale/shift always
// applied.
Tensor batch_norm(const Tensor& x, BatchNorm& bn, int feature_axis,
                  bool training);

// One graph convolution: out = prop * BN(h) * W + b.
struct GraphConvLayer {
  BatchNorm bn;  // input normalization
  Tensor weight;
  Tensor bias;  // shared across nodes
};

Tensor graph_conv_forward(const Tensor& h, GraphConvLayer& layer,
                          const SparseMatrixPtr& prop, bool training);

// out[i] = elementwise max over the closed neighborhood N(i) u {i}; gradient
// routed to the argmax, ties to the lowest node index.
Tensor graph_neighbor_maxpool(const Tensor& h, const KnnGraph& graph);

// conv -> BN -> stride-1 max-pool -> ReLU, extents preserved end to end.
struct ConvBlock {
  Tensor kernel;  // [kh, kw, ci, co]
  BatchNorm bn;
  int pool_window = 2;
};

Tensor conv_block_forward(const Tensor& x, ConvBlock& block, bool training);

// Second-order pooled descriptor: signed sqrt of h^T h / m and its row-major
// flattening.
struct SecondOrderDescriptor {
  Tensor matrix;      // [c, c]
  Tensor vectorized;  // [c*c]
};

SecondOrderDescriptor sop(const Tensor& h);

enum class GsopMode { Global, PerNode };

// Graph second-order pooling. Global mode collapses all nodes into one f^2
// vector; per-node mode pools each closed neighborhood into row i of an
// [n, f^2] matrix. Both scale by the pooled count and apply signed sqrt.
Tensor gsop(const Tensor& h, const KnnGraph& graph, GsopMode mode);

// Per-pixel SOP over a square patch of an [H, W, C] feature raster, clipped
// at the borders: raw Gram matrices, scaled by the patch size, flattened to
// [H*W, C*C]. Signed sqrt is applied by the caller.
Tensor pixel_sop_raw(const Tensor& x, int radius);

// Raw per-node GSOP without the signed sqrt; gsop() composes this.
Tensor node_gsop_raw(const Tensor& h, const KnnGraph& graph);

}  // namespace mshc
