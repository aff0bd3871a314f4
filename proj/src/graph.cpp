#include "mshc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mshc/errors.hpp"

namespace mshc {

SparseMatrix SparseMatrix::identity(i64 n) {
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.resize(n + 1);
  m.col.resize(n);
  m.val.assign(n, real(1));
  for (i64 i = 0; i <= n; ++i) m.row_ptr[i] = i;
  for (i64 i = 0; i < n; ++i) m.col[i] = i;
  m.symmetric = true;
  return m;
}

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.symmetric = symmetric;
  t.row_ptr.assign(cols + 1, 0);
  for (i64 c : col) ++t.row_ptr[c + 1];
  for (i64 i = 0; i < cols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
  t.col.resize(col.size());
  t.val.resize(val.size());
  std::vector<i64> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (i64 r = 0; r < rows; ++r) {
    for (i64 e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
      const i64 at = cursor[col[e]]++;
      t.col[at] = r;
      t.val[at] = val[e];
    }
  }
  return t;
}

std::vector<real> SparseMatrix::dense() const {
  std::vector<real> d(static_cast<std::size_t>(rows * cols), real(0));
  for (i64 r = 0; r < rows; ++r) {
    for (i64 e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
      d[r * cols + col[e]] = val[e];
    }
  }
  return d;
}

namespace {

// Assembles degrees, Laplacian and closed neighborhoods from sorted
// adjacency lists.
void finalize_graph(KnnGraph& g) {
  const i64 n = g.n;
  auto adj = std::make_shared<SparseMatrix>();
  adj->rows = adj->cols = n;
  adj->symmetric = true;
  adj->row_ptr.resize(n + 1);
  adj->row_ptr[0] = 0;
  g.degrees.resize(n);
  for (i64 i = 0; i < n; ++i) {
    g.degrees[i] = static_cast<i64>(g.neighbors[i].size());
    adj->row_ptr[i + 1] = adj->row_ptr[i] + g.degrees[i];
  }
  adj->col.reserve(adj->row_ptr[n]);
  for (i64 i = 0; i < n; ++i) {
    adj->col.insert(adj->col.end(), g.neighbors[i].begin(),
                    g.neighbors[i].end());
  }
  adj->val.assign(adj->col.size(), real(1));
  g.adjacency = adj;
  g.laplacian =
      std::make_shared<SparseMatrix>(sym_normalized_laplacian(*adj));

  g.closed_ptr.resize(n + 1);
  g.closed_ptr[0] = 0;
  for (i64 i = 0; i < n; ++i) {
    g.closed_ptr[i + 1] = g.closed_ptr[i] + g.degrees[i] + 1;
  }
  g.closed_idx.reserve(g.closed_ptr[n]);
  for (i64 i = 0; i < n; ++i) {
    bool placed = false;
    for (i64 j : g.neighbors[i]) {
      if (!placed && i < j) {
        g.closed_idx.push_back(i);
        placed = true;
      }
      g.closed_idx.push_back(j);
    }
    if (!placed) g.closed_idx.push_back(i);
  }
}

}  // namespace

KnnGraph build_knn_graph(const Tensor& features, const GraphConfig& cfg) {
  if (features.rank() != 2) {
    throw DimensionError("build_knn_graph: features must be [n x d], got " +
                         shape_str(features.shape()));
  }
  const i64 n = features.dim(0);
  const i64 d = features.dim(1);
  if (cfg.k < 1) throw ConfigError("build_knn_graph: k must be >= 1");
  if (n <= cfg.k) {
    throw ConfigError("build_knn_graph: need more than k=" +
                      std::to_string(cfg.k) + " nodes, got " +
                      std::to_string(n));
  }
  if (d < 1) throw ConfigError("build_knn_graph: empty feature vectors");
  if (n > cfg.max_nodes) {
    throw ConfigError("build_knn_graph: " + std::to_string(n) +
                      " nodes exceed the cap of " +
                      std::to_string(cfg.max_nodes) +
                      "; use patch batching for rasters this large");
  }
  for (i64 i = 0; i < n * d; ++i) {
    if (!std::isfinite(static_cast<double>(features.data()[i]))) {
      throw DataError("build_knn_graph: non-finite feature at pixel " +
                      std::to_string(i / d));
    }
  }

  std::vector<i64> picks(static_cast<std::size_t>(n) * cfg.k);
  kernels::par::knn_neighbors(features.data().data(), n, d, cfg.k,
                              picks.data());

  KnnGraph g;
  g.n = n;
  g.k = cfg.k;
  g.neighbors.assign(n, {});
  for (i64 i = 0; i < n; ++i) {
    for (int t = 0; t < cfg.k; ++t) {
      const i64 j = picks[i * cfg.k + t];
      g.neighbors[i].push_back(j);
      g.neighbors[j].push_back(i);
    }
  }
  for (i64 i = 0; i < n; ++i) {
    auto& nb = g.neighbors[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  finalize_graph(g);
  return g;
}

KnnGraph graph_from_edges(i64 n,
                          const std::vector<std::pair<i64, i64>>& edges) {
  KnnGraph g;
  g.n = n;
  g.k = 0;
  g.neighbors.assign(n, {});
  for (auto [a, b] : edges) {
    if (a == b) continue;
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  for (auto& nb : g.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  finalize_graph(g);
  return g;
}

SparseMatrix sym_normalized_laplacian(const SparseMatrix& a) {
  if (a.rows != a.cols) {
    throw DimensionError("laplacian: adjacency must be square");
  }
  const i64 n = a.rows;
  std::vector<real> inv_sqrt_deg(n);
  for (i64 i = 0; i < n; ++i) {
    const i64 deg = a.row_ptr[i + 1] - a.row_ptr[i];
    if (deg < 1) {
      throw DataError("laplacian: isolated node " + std::to_string(i) +
                      " (degree 0 cannot be normalized)");
    }
    inv_sqrt_deg[i] = real(1) / std::sqrt(static_cast<real>(deg));
  }

  SparseMatrix l;
  l.rows = l.cols = n;
  l.symmetric = true;
  l.row_ptr.resize(n + 1);
  l.row_ptr[0] = 0;
  l.col.reserve(a.col.size() + n);
  l.val.reserve(a.col.size() + n);
  for (i64 i = 0; i < n; ++i) {
    bool placed = false;
    for (i64 e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
      const i64 j = a.col[e];
      if (j == i) continue;  // self loops never enter L_sym
      if (!placed && i < j) {
        l.col.push_back(i);
        l.val.push_back(real(1));
        placed = true;
      }
      l.col.push_back(j);
      l.val.push_back(-a.val[e] * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    if (!placed) {
      l.col.push_back(i);
      l.val.push_back(real(1));
    }
    l.row_ptr[i + 1] = static_cast<i64>(l.col.size());
  }
  return l;
}

Tensor spmv(const SparseMatrixPtr& m, const Tensor& x) {
  if (!m) throw ContractError("spmv: null matrix");
  if (x.rank() != 2 || x.dim(0) != m->cols) {
    throw DimensionError("spmv: matrix [" + std::to_string(m->rows) + "x" +
                         std::to_string(m->cols) + "] vs x " +
                         shape_str(x.shape()));
  }
  const i64 c = x.dim(1);
  Tape* tape = detail::recording_tape({&x});
  std::vector<real> out(static_cast<std::size_t>(m->rows * c));
  kernels::par::spmv(m->view(), x.data().data(), out.data(), c);
  Tensor y = Tensor::op_output({m->rows, c}, std::move(out), tape);
  if (tape) {
    tape->record([m, xn = x.node(), yn = y.node(), c] {
      if (!xn->tracked) return;
      // dX = M^T dY
      const SparseMatrix* mt = m.get();
      SparseMatrix scratch;
      if (!m->symmetric) {
        scratch = m->transposed();
        mt = &scratch;
      }
      std::vector<real> gx(xn->grad.size());
      kernels::par::spmv(mt->view(), yn->grad.data(), gx.data(), c);
      for (std::size_t i = 0; i < gx.size(); ++i) xn->grad[i] += gx[i];
    });
  }
  return y;
}

SparseMatrix KnnGraph::renorm_adjacency() const {
  // A~ = A + I, D~ from A~, result D~^-1/2 A~ D~^-1/2
  std::vector<real> inv_sqrt_deg(n);
  for (i64 i = 0; i < n; ++i) {
    inv_sqrt_deg[i] = real(1) / std::sqrt(static_cast<real>(degrees[i] + 1));
  }
  SparseMatrix m;
  m.rows = m.cols = n;
  m.symmetric = true;
  m.row_ptr.resize(n + 1);
  m.row_ptr[0] = 0;
  m.col.reserve(closed_idx.size());
  m.val.reserve(closed_idx.size());
  for (i64 i = 0; i < n; ++i) {
    for (i64 e = closed_ptr[i]; e < closed_ptr[i + 1]; ++e) {
      const i64 j = closed_idx[e];
      m.col.push_back(j);
      m.val.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    m.row_ptr[i + 1] = static_cast<i64>(m.col.size());
  }
  return m;
}

Tensor graph_features(const Tensor& cube, const GraphConfig& cfg) {
  if (cube.rank() != 3) {
    throw DimensionError("graph_features: cube must be [MxNxB], got " +
                         shape_str(cube.shape()));
  }
  const i64 m = cube.dim(0), n = cube.dim(1), b = cube.dim(2);
  if (cfg.feature_space == GraphFeatureSpace::Spectral) {
    return reshape(cube, {m * n, b});
  }
  std::vector<real> out(static_cast<std::size_t>(m * n * (b + 2)));
  const real rdiv = m > 1 ? static_cast<real>(m - 1) : real(1);
  const real cdiv = n > 1 ? static_cast<real>(n - 1) : real(1);
  for (i64 r = 0; r < m; ++r) {
    for (i64 c = 0; c < n; ++c) {
      real* row = out.data() + (r * n + c) * (b + 2);
      const real* src = cube.data().data() + (r * n + c) * b;
      std::copy(src, src + b, row);
      row[b] = cfg.spatial_scale * static_cast<real>(r) / rdiv;
      row[b + 1] = cfg.spatial_scale * static_cast<real>(c) / cdiv;
    }
  }
  return Tensor({m * n, b + 2}, std::move(out));
}

}  // namespace mshc
