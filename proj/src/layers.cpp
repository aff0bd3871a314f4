#include "mshc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mshc/errors.hpp"

namespace mshc {

BatchNorm::BatchNorm(i64 features)
    : gamma(Tensor::param({features}, std::vector<real>(features, real(1)))),
      beta(Tensor::param({features}, std::vector<real>(features, real(0)))),
      running_mean(features, real(0)),
      running_var(features, real(1)) {}

Tensor batch_norm(const Tensor& x, BatchNorm& bn, int feature_axis,
                  bool training) {
  if (feature_axis < 0 || feature_axis >= x.rank()) {
    throw DimensionError("batch_norm: axis " + std::to_string(feature_axis) +
                         " out of range for " + shape_str(x.shape()));
  }
  const i64 c = x.dim(feature_axis);
  if (c != bn.features()) {
    throw DimensionError("batch_norm: feature extent " + std::to_string(c) +
                         " does not match state of " +
                         std::to_string(bn.features()));
  }
  const i64 total = x.size();
  const i64 m = total / c;  // positions per feature
  if (m == 0) throw ContractError("batch_norm: zero-extent batch");

  i64 inner = 1;
  for (int i = feature_axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  Tape* tape = detail::recording_tape({&x, &bn.gamma, &bn.beta});

  std::vector<real> mean(c, real(0)), var(c, real(0));
  if (training) {
    for (i64 i = 0; i < total; ++i) {
      mean[(i / inner) % c] += x.data()[i];
    }
    for (i64 j = 0; j < c; ++j) mean[j] /= static_cast<real>(m);
    for (i64 i = 0; i < total; ++i) {
      const real d = x.data()[i] - mean[(i / inner) % c];
      var[(i / inner) % c] += d * d;
    }
    for (i64 j = 0; j < c; ++j) var[j] /= static_cast<real>(m);
    for (i64 j = 0; j < c; ++j) {
      bn.running_mean[j] =
          bn.momentum * bn.running_mean[j] + (real(1) - bn.momentum) * mean[j];
      bn.running_var[j] =
          bn.momentum * bn.running_var[j] + (real(1) - bn.momentum) * var[j];
    }
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }

  auto inv_std = std::make_shared<std::vector<real>>(c);
  for (i64 j = 0; j < c; ++j) {
    (*inv_std)[j] = real(1) / std::sqrt(var[j] + bn.eps);
  }
  auto xhat = std::make_shared<std::vector<real>>(total);
  std::vector<real> out(total);
  for (i64 i = 0; i < total; ++i) {
    const i64 j = (i / inner) % c;
    const real xh = (x.data()[i] - mean[j]) * (*inv_std)[j];
    (*xhat)[i] = xh;
    out[i] = bn.gamma.data()[j] * xh + bn.beta.data()[j];
  }
  Tensor y = Tensor::op_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record([xn = x.node(), gn = bn.gamma.node(), bnn = bn.beta.node(),
                  yn = y.node(), xhat, inv_std, c, m, inner, training] {
      const auto& g = yn->grad;
      const i64 total = static_cast<i64>(g.size());
      // per-feature reductions of dy and dy*xhat
      std::vector<real> sum_g(c, real(0)), sum_gx(c, real(0));
      for (i64 i = 0; i < total; ++i) {
        const i64 j = (i / inner) % c;
        sum_g[j] += g[i];
        sum_gx[j] += g[i] * (*xhat)[i];
      }
      if (bnn->tracked) {
        for (i64 j = 0; j < c; ++j) bnn->grad[j] += sum_g[j];
      }
      if (gn->tracked) {
        for (i64 j = 0; j < c; ++j) gn->grad[j] += sum_gx[j];
      }
      if (xn->tracked) {
        const real inv_m = real(1) / static_cast<real>(m);
        for (i64 i = 0; i < total; ++i) {
          const i64 j = (i / inner) % c;
          if (training) {
            xn->grad[i] += gn->value[j] * (*inv_std)[j] *
                           (g[i] - sum_g[j] * inv_m -
                            (*xhat)[i] * sum_gx[j] * inv_m);
          } else {
            xn->grad[i] += gn->value[j] * (*inv_std)[j] * g[i];
          }
        }
      }
    });
  }
  return y;
}

Tensor graph_conv_forward(const Tensor& h, GraphConvLayer& layer,
                          const SparseMatrixPtr& prop, bool training) {
  if (h.rank() != 2) {
    throw DimensionError("graph_conv: node features must be [n x c], got " +
                         shape_str(h.shape()));
  }
  if (h.dim(0) != prop->rows) {
    throw DimensionError("graph_conv: " + std::to_string(h.dim(0)) +
                         " feature rows vs graph with " +
                         std::to_string(prop->rows) + " nodes");
  }
  Tensor normalized = batch_norm(h, layer.bn, 1, training);
  Tensor propagated = spmv(prop, normalized);
  return add_rowvec(matmul(propagated, layer.weight), layer.bias);
}

Tensor graph_neighbor_maxpool(const Tensor& h, const KnnGraph& graph) {
  if (h.rank() != 2 || h.dim(0) != graph.n) {
    throw DimensionError("neighbor_maxpool: features " + shape_str(h.shape()) +
                         " vs graph with " + std::to_string(graph.n) +
                         " nodes");
  }
  const i64 n = graph.n, c = h.dim(1);
  Tape* tape = detail::recording_tape({&h});
  std::vector<real> out(static_cast<std::size_t>(n * c));
  auto argmax = std::make_shared<std::vector<i64>>(n * c);
  for (i64 i = 0; i < n; ++i) {
    for (i64 e = graph.closed_ptr[i]; e < graph.closed_ptr[i + 1]; ++e) {
      const i64 j = graph.closed_idx[e];
      for (i64 ch = 0; ch < c; ++ch) {
        const real v = h.data()[j * c + ch];
        if (e == graph.closed_ptr[i] || v > out[i * c + ch]) {
          out[i * c + ch] = v;
          (*argmax)[i * c + ch] = j;
        }
      }
    }
  }
  Tensor y = Tensor::op_output({n, c}, std::move(out), tape);
  if (tape) {
    tape->record([hn = h.node(), yn = y.node(), argmax, c] {
      if (!hn->tracked) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        hn->grad[(*argmax)[i] * c + static_cast<i64>(i) % c] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor conv_block_forward(const Tensor& x, ConvBlock& block, bool training) {
  if (x.rank() != 3 || x.dim(2) != block.kernel.dim(2)) {
    throw DimensionError("conv_block: input " + shape_str(x.shape()) +
                         " does not feed kernel " +
                         shape_str(block.kernel.shape()));
  }
  Tensor y = conv2d_same(x, block.kernel);
  y = batch_norm(y, block.bn, 2, training);
  y = maxpool2d_same(y, block.pool_window);
  return relu(y);
}

SecondOrderDescriptor sop(const Tensor& h) {
  if (h.rank() != 2 || h.dim(0) < 1) {
    throw DimensionError("sop: expected a non-empty [m x c] matrix, got " +
                         shape_str(h.shape()));
  }
  const i64 m = h.dim(0), c = h.dim(1);
  Tensor raw = scale(matmul(transpose(h), h), real(1) / static_cast<real>(m));
  SecondOrderDescriptor d;
  d.matrix = signed_sqrt(raw);
  d.vectorized = reshape(d.matrix, {c * c});
  return d;
}

Tensor node_gsop_raw(const Tensor& h, const KnnGraph& graph) {
  if (h.rank() != 2 || h.dim(0) != graph.n) {
    throw DimensionError("gsop: features " + shape_str(h.shape()) +
                         " vs graph with " + std::to_string(graph.n) +
                         " nodes");
  }
  const i64 n = graph.n, f = h.dim(1);
  Tape* tape = detail::recording_tape({&h});
  std::vector<real> out(static_cast<std::size_t>(n * f * f));
  kernels::par::node_gsop(h.data().data(), out.data(), n, f,
                          graph.closed_ptr.data(), graph.closed_idx.data());
  Tensor y = Tensor::op_output({n, f * f}, std::move(out), tape);
  if (tape) {
    // keep the neighborhood structure alive inside the closure
    auto ptr = std::make_shared<std::vector<i64>>(graph.closed_ptr);
    auto idx = std::make_shared<std::vector<i64>>(graph.closed_idx);
    tape->record([hn = h.node(), yn = y.node(), ptr, idx, n, f] {
      if (!hn->tracked) return;
      kernels::par::node_gsop_grad(hn->value.data(), yn->grad.data(),
                                   hn->grad.data(), n, f, ptr->data(),
                                   idx->data());
    });
  }
  return y;
}

Tensor gsop(const Tensor& h, const KnnGraph& graph, GsopMode mode) {
  if (mode == GsopMode::Global) {
    const i64 n = h.dim(0), f = h.dim(1);
    Tensor raw =
        scale(matmul(transpose(h), h), real(1) / static_cast<real>(n));
    return reshape(signed_sqrt(raw), {f * f});
  }
  return signed_sqrt(node_gsop_raw(h, graph));
}

Tensor pixel_sop_raw(const Tensor& x, int radius) {
  if (x.rank() != 3) {
    throw DimensionError("pixel_sop: expected [H x W x C], got " +
                         shape_str(x.shape()));
  }
  if (radius < 0) throw ConfigError("pixel_sop: negative radius");
  const i64 h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tape* tape = detail::recording_tape({&x});
  std::vector<real> out(static_cast<std::size_t>(h * w * c * c));
  kernels::par::pixel_sop(x.data().data(), out.data(), h, w, c, radius);
  Tensor y = Tensor::op_output({h * w, c * c}, std::move(out), tape);
  if (tape) {
    tape->record([xn = x.node(), yn = y.node(), h, w, c, radius] {
      if (!xn->tracked) return;
      kernels::par::pixel_sop_grad(xn->value.data(), yn->grad.data(),
                                   xn->grad.data(), h, w, c, radius);
    });
  }
  return y;
}

}  // namespace mshc
