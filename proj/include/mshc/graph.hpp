#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "mshc/tensor.hpp"

namespace mshc {

// Compressed sparse row matrix. Column indices are sorted within each row.
struct SparseMatrix {
  i64 rows = 0;
  i64 cols = 0;
  std::vector<i64> row_ptr;
  std::vector<i64> col;
  std::vector<real> val;
  bool symmetric = false;

  static SparseMatrix identity(i64 n);

  kernels::CsrView view() const {
    return {row_ptr.data(), col.data(), val.data(), rows, cols};
  }
  i64 nnz() const { return static_cast<i64>(val.size()); }
  SparseMatrix transposed() const;
  std::vector<real> dense() const;
};

using SparseMatrixPtr = std::shared_ptr<const SparseMatrix>;

enum class GraphFeatureSpace { Spectral, SpectralSpatial };

struct GraphConfig {
  int k = 10;
  GraphFeatureSpace feature_space = GraphFeatureSpace::Spectral;
  real spatial_scale = real(1);  // weight of appended (row, col) coordinates
  i64 max_nodes = 65536;
};

// KNN pixel graph with cached symmetric normalized Laplacian.
struct KnnGraph {
  i64 n = 0;
  int k = 0;
  std::vector<std::vector<i64>> neighbors;  // sorted, no self, symmetric
  SparseMatrixPtr adjacency;                // 0/1 entries
  std::vector<i64> degrees;
  SparseMatrixPtr laplacian;  // I - D^-1/2 A D^-1/2
  // closed neighborhoods N(i) u {i} in CSR form, sorted; used by the pooling
  // and GSOP kernels
  std::vector<i64> closed_ptr;
  std::vector<i64> closed_idx;

  // D~^-1/2 (A + I) D~^-1/2, the renormalized propagation alternative
  SparseMatrix renorm_adjacency() const;
};

// Links every node to its cfg.k nearest distinct nodes (Euclidean, ties to
// the lower index) and keeps an edge when either endpoint selected it.
KnnGraph build_knn_graph(const Tensor& features, const GraphConfig& cfg);

// Builds a graph directly from undirected edges; used by tests and small
// fixtures.
KnnGraph graph_from_edges(i64 n, const std::vector<std::pair<i64, i64>>& edges);

// L_sym from a 0/1 adjacency; every node must have degree >= 1.
SparseMatrix sym_normalized_laplacian(const SparseMatrix& adjacency);

// y = M x, differentiable in x.
Tensor spmv(const SparseMatrixPtr& m, const Tensor& x);

// Node feature matrix for graph construction: the spectrum of each pixel,
// optionally with scaled (row, col) coordinates appended.
Tensor graph_features(const Tensor& cube, const GraphConfig& cfg);

}  // namespace mshc
