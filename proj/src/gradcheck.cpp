#include "mshc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mshc/errors.hpp"
#include "mshc/graph.hpp"
#include "mshc/layers.hpp"
#include "mshc/model.hpp"
#include "mshc/rng.hpp"

namespace mshc::gradcheck {

double max_rel_err(const std::function<Tensor()>& fn,
                   std::vector<Tensor>& inputs, real step) {
  for (Tensor& in : inputs) in.zero_grad();
  std::vector<std::vector<real>> analytic;
  {
    Tape tape;
    TapeScope guard(tape);
    Tensor loss = fn();
    backward(loss);
  }
  for (Tensor& in : inputs) analytic.push_back(in.grad());
  for (Tensor& in : inputs) in.zero_grad();

  double worst = 0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real saved = values[i];
      values[i] = saved + step;
      const double f_plus = static_cast<double>(fn().item());
      values[i] = saved - step;
      const double f_minus = static_cast<double>(fn().item());
      values[i] = saved;
      const double numeric =
          (f_plus - f_minus) / (2.0 * static_cast<double>(step));
      const double a = static_cast<double>(analytic[t][i]);
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1.0});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

std::vector<real> uniform_vec(Rng& rng, i64 n, double lo, double hi) {
  std::vector<real> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return v;
}

// values bounded away from zero, for kinked activations
std::vector<real> signed_vec(Rng& rng, i64 n) {
  std::vector<real> v(static_cast<std::size_t>(n));
  for (auto& x : v) {
    const double mag = rng.uniform(0.05, 1.0);
    x = static_cast<real>(rng.uniform() < 0.5 ? -mag : mag);
  }
  return v;
}

// pairwise-distinct values (gap >= 8e-3 > 2*step) so max selections are
// stable under the probe
std::vector<real> distinct_vec(Rng& rng, i64 n) {
  std::vector<real> v(static_cast<std::size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    v[static_cast<std::size_t>(i)] =
        static_cast<real>(0.01 * static_cast<double>(i) +
                          rng.uniform(-0.001, 0.001));
  }
  rng.shuffle(v);
  return v;
}

KnnGraph small_graph(Rng& rng, i64 n, int k) {
  GraphConfig cfg;
  cfg.k = k;
  Tensor feats({n, 3}, uniform_vec(rng, n * 3, 0.0, 1.0));
  return build_knn_graph(feats, cfg);
}

struct Case {
  std::string name;
  std::function<double(std::uint64_t)> run;  // seed -> max rel err
};

}  // namespace

std::vector<OpReport> run_suite(int num_seeds, double tolerance) {
  std::vector<Case> cases;

  cases.push_back({"matmul", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = Tensor::param({4, 3}, uniform_vec(rng, 12, -1.0, 1.0));
    Tensor b = Tensor::param({3, 5}, uniform_vec(rng, 15, -1.0, 1.0));
    std::vector<Tensor> inputs{a, b};
    Rng wrng(seed + 1);
    Tensor w({4, 5}, uniform_vec(wrng, 20, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(matmul(a, b), w)); },
                       inputs);
  }});

  cases.push_back({"conv2d", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({6, 5, 3}, uniform_vec(rng, 90, -1.0, 1.0));
    Tensor k = Tensor::param({3, 3, 3, 4}, uniform_vec(rng, 108, -1.0, 1.0));
    std::vector<Tensor> inputs{x, k};
    Rng wrng(seed + 1);
    Tensor w({6, 5, 4}, uniform_vec(wrng, 120, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(conv2d_same(x, k), w)); },
                       inputs);
  }});

  cases.push_back({"maxpool2d", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({6, 6, 2}, distinct_vec(rng, 72));
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({6, 6, 2}, uniform_vec(wrng, 72, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(maxpool2d_same(x), w)); },
                       inputs);
  }});

  cases.push_back({"batch_norm_train", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({8, 5}, uniform_vec(rng, 40, -1.0, 1.0));
    BatchNorm bn(5);
    bn.gamma.mutable_data() = uniform_vec(rng, 5, 0.5, 1.5);
    bn.beta.mutable_data() = uniform_vec(rng, 5, -0.5, 0.5);
    std::vector<Tensor> inputs{x, bn.gamma, bn.beta};
    Rng wrng(seed + 1);
    Tensor w({8, 5}, uniform_vec(wrng, 40, -1.0, 1.0));
    return max_rel_err(
        [&] { return reduce_sum(mul(batch_norm(x, bn, 1, true), w)); },
        inputs);
  }});

  cases.push_back({"batch_norm_eval", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({8, 5}, uniform_vec(rng, 40, -1.0, 1.0));
    BatchNorm bn(5);
    bn.gamma.mutable_data() = uniform_vec(rng, 5, 0.5, 1.5);
    bn.beta.mutable_data() = uniform_vec(rng, 5, -0.5, 0.5);
    bn.running_mean = uniform_vec(rng, 5, -0.3, 0.3);
    bn.running_var = uniform_vec(rng, 5, 0.5, 1.5);
    std::vector<Tensor> inputs{x, bn.gamma, bn.beta};
    Rng wrng(seed + 1);
    Tensor w({8, 5}, uniform_vec(wrng, 40, -1.0, 1.0));
    return max_rel_err(
        [&] { return reduce_sum(mul(batch_norm(x, bn, 1, false), w)); },
        inputs);
  }});

  cases.push_back({"relu", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({7, 3}, signed_vec(rng, 21));
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({7, 3}, uniform_vec(wrng, 21, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(relu(x), w)); }, inputs);
  }});

  cases.push_back({"leaky_relu", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({7, 3}, signed_vec(rng, 21));
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({7, 3}, uniform_vec(wrng, 21, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(leaky_relu(x), w)); },
                       inputs);
  }});

  cases.push_back({"signed_sqrt", [](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<real> vals = signed_vec(rng, 18);
    for (auto& v : vals) v = v < 0 ? std::min(v, real(-0.25)) : std::max(v, real(0.25));
    Tensor x = Tensor::param({18}, vals);
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({18}, uniform_vec(wrng, 18, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(signed_sqrt(x), w)); },
                       inputs);
  }});

  cases.push_back({"softmax", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({4, 5}, uniform_vec(rng, 20, -2.0, 2.0));
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({4, 5}, uniform_vec(wrng, 20, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(softmax(x, 1), w)); },
                       inputs);
  }});

  cases.push_back({"elementwise", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = Tensor::param({5, 4}, uniform_vec(rng, 20, -1.0, 1.0));
    Tensor b = Tensor::param({5, 4}, uniform_vec(rng, 20, -1.0, 1.0));
    Tensor v = Tensor::param({4}, uniform_vec(rng, 4, -1.0, 1.0));
    std::vector<Tensor> inputs{a, b, v};
    Rng wrng(seed + 1);
    Tensor w({5, 4}, uniform_vec(wrng, 20, -1.0, 1.0));
    return max_rel_err(
        [&] {
          Tensor y = add_rowvec(add(mul(a, b), scale(sub(a, b), real(0.5))), v);
          return reduce_sum(mul(y, w));
        },
        inputs);
  }});

  cases.push_back({"reshape_transpose_concat_slice", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = Tensor::param({4, 6}, uniform_vec(rng, 24, -1.0, 1.0));
    Tensor b = Tensor::param({4, 3}, uniform_vec(rng, 12, -1.0, 1.0));
    std::vector<Tensor> inputs{a, b};
    Rng wrng(seed + 1);
    Tensor w({9, 4}, uniform_vec(wrng, 36, -1.0, 1.0));
    return max_rel_err(
        [&] {
          Tensor joined = concat({reshape(a, {4, 6}), b}, 1);  // [4, 9]
          Tensor cut = slice(transpose(joined), 0, 0, 9);      // [9, 4]
          return reduce_sum(mul(cut, w));
        },
        inputs);
  }});

  cases.push_back({"reduce_max", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({5, 5}, distinct_vec(rng, 25));
    std::vector<Tensor> inputs{x};
    return max_rel_err([&] { return reduce_max(x); }, inputs);
  }});

  cases.push_back({"spmv", [](std::uint64_t seed) {
    Rng rng(seed);
    // random asymmetric sparse matrix
    auto m = std::make_shared<SparseMatrix>();
    m->rows = m->cols = 7;
    m->row_ptr.push_back(0);
    for (i64 r = 0; r < 7; ++r) {
      std::vector<i64> cols;
      for (i64 c = 0; c < 7; ++c) {
        if (rng.uniform() < 0.4) cols.push_back(c);
      }
      if (cols.empty()) cols.push_back(static_cast<i64>(rng.below(7)));
      for (i64 c : cols) {
        m->col.push_back(c);
        m->val.push_back(static_cast<real>(rng.uniform(-1.0, 1.0)));
      }
      m->row_ptr.push_back(static_cast<i64>(m->col.size()));
    }
    Tensor x = Tensor::param({7, 3}, uniform_vec(rng, 21, -1.0, 1.0));
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({7, 3}, uniform_vec(wrng, 21, -1.0, 1.0));
    SparseMatrixPtr mp = m;
    return max_rel_err([&] { return reduce_sum(mul(spmv(mp, x), w)); },
                       inputs);
  }});

  cases.push_back({"graph_conv", [](std::uint64_t seed) {
    Rng rng(seed);
    KnnGraph g = small_graph(rng, 9, 2);
    Tensor h = Tensor::param({9, 4}, uniform_vec(rng, 36, -1.0, 1.0));
    GraphConvLayer layer;
    layer.bn = BatchNorm(4);
    layer.weight = Tensor::param({4, 3}, uniform_vec(rng, 12, -1.0, 1.0));
    layer.bias = Tensor::param({3}, uniform_vec(rng, 3, -0.5, 0.5));
    std::vector<Tensor> inputs{h, layer.weight, layer.bias, layer.bn.gamma,
                               layer.bn.beta};
    Rng wrng(seed + 1);
    Tensor w({9, 3}, uniform_vec(wrng, 27, -1.0, 1.0));
    return max_rel_err(
        [&] {
          return reduce_sum(
              mul(graph_conv_forward(h, layer, g.laplacian, true), w));
        },
        inputs);
  }});

  cases.push_back({"neighbor_maxpool", [](std::uint64_t seed) {
    Rng rng(seed);
    KnnGraph g = small_graph(rng, 10, 3);
    Tensor h = Tensor::param({10, 4}, distinct_vec(rng, 40));
    std::vector<Tensor> inputs{h};
    Rng wrng(seed + 1);
    Tensor w({10, 4}, uniform_vec(wrng, 40, -1.0, 1.0));
    return max_rel_err(
        [&] { return reduce_sum(mul(graph_neighbor_maxpool(h, g), w)); },
        inputs);
  }});

  cases.push_back({"sop", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor h = Tensor::param({6, 4}, uniform_vec(rng, 24, 0.5, 1.5));
    std::vector<Tensor> inputs{h};
    Rng wrng(seed + 1);
    Tensor w({16}, uniform_vec(wrng, 16, -1.0, 1.0));
    return max_rel_err([&] { return reduce_sum(mul(sop(h).vectorized, w)); },
                       inputs);
  }});

  cases.push_back({"gsop_per_node", [](std::uint64_t seed) {
    Rng rng(seed);
    KnnGraph g = small_graph(rng, 8, 2);
    Tensor h = Tensor::param({8, 3}, uniform_vec(rng, 24, 0.5, 1.5));
    std::vector<Tensor> inputs{h};
    Rng wrng(seed + 1);
    Tensor w({8, 9}, uniform_vec(wrng, 72, -1.0, 1.0));
    return max_rel_err(
        [&] { return reduce_sum(mul(gsop(h, g, GsopMode::PerNode), w)); },
        inputs);
  }});

  cases.push_back({"gsop_global", [](std::uint64_t seed) {
    Rng rng(seed);
    KnnGraph g = small_graph(rng, 8, 2);
    Tensor h = Tensor::param({8, 3}, uniform_vec(rng, 24, 0.5, 1.5));
    std::vector<Tensor> inputs{h};
    Rng wrng(seed + 1);
    Tensor w({9}, uniform_vec(wrng, 9, -1.0, 1.0));
    return max_rel_err(
        [&] { return reduce_sum(mul(gsop(h, g, GsopMode::Global), w)); },
        inputs);
  }});

  cases.push_back({"pixel_sop", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::param({5, 5, 3}, uniform_vec(rng, 75, 0.5, 1.5));
    std::vector<Tensor> inputs{x};
    Rng wrng(seed + 1);
    Tensor w({25, 9}, uniform_vec(wrng, 225, -1.0, 1.0));
    return max_rel_err(
        [&] { return reduce_sum(mul(signed_sqrt(pixel_sop_raw(x, 1)), w)); },
        inputs);
  }});

  cases.push_back({"fusion_and_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    ModelConfig cfg;
    cfg.bands = 3;
    cfg.num_classes = 3;
    cfg.g_widths = {4};
    cfg.c_channels = {5};
    cfg.c_kernels = {3};
    cfg.n_extractor_channels = 2;
    cfg.n_projection = 4;
    cfg.s_projection = 2;
    cfg.fusion_hidden = {6, 5};
    cfg.knn.k = 2;
    ModelState st = ModelState::init(cfg, seed);
    const i64 n = 7;
    StreamOutputs outs;
    Tensor hg = Tensor::param({n, 4}, uniform_vec(rng, n * 4, -1.0, 1.0));
    Tensor hc = Tensor::param({n, 5}, uniform_vec(rng, n * 5, -1.0, 1.0));
    Tensor hn = Tensor::param({n, 4}, uniform_vec(rng, n * 4, -1.0, 1.0));
    Tensor hs = Tensor::param({n, 4}, uniform_vec(rng, n * 4, -1.0, 1.0));
    std::vector<std::uint16_t> labels(n);
    for (auto& l : labels) {
      l = static_cast<std::uint16_t>(1 + rng.below(3));
    }
    std::vector<i64> pixels{0, 2, 4, 6};
    std::vector<Tensor> inputs{hg, hc, hn, hs};
    for (Param& p : st.parameters()) {
      if (p.name.rfind("fusion.", 0) == 0) inputs.push_back(p.tensor);
    }
    return max_rel_err(
        [&] {
          StreamOutputs o;
          o.h_g = hg;
          o.h_c = hc;
          o.h_n = hn;
          o.h_s = hs;
          Tensor logits = fuse_and_classify(o, st, true);
          return cross_entropy_loss(logits, labels, pixels);
        },
        inputs);
  }});

  cases.push_back({"cross_entropy", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor logits = Tensor::param({6, 4}, uniform_vec(rng, 24, -1.5, 1.5));
    std::vector<std::uint16_t> labels(6);
    for (auto& l : labels) l = static_cast<std::uint16_t>(1 + rng.below(4));
    std::vector<i64> pixels{0, 1, 3, 5};
    std::vector<Tensor> inputs{logits};
    return max_rel_err(
        [&] { return cross_entropy_loss(logits, labels, pixels); }, inputs);
  }});

  std::vector<OpReport> reports;
  for (const Case& c : cases) {
    OpReport r;
    r.name = c.name;
    for (int s = 0; s < num_seeds; ++s) {
      r.max_rel_err =
          std::max(r.max_rel_err, c.run(static_cast<std::uint64_t>(s) * 7919 + 17));
    }
    r.pass = r.max_rel_err < tolerance;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace mshc::gradcheck
