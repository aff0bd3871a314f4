// The par kernels must agree with the ref kernels to the last bit: they keep
// the same per-element accumulation order and only parallelize independent
// outputs.

#include <vector>

#include "doctest.h"
#include "mshc/graph.hpp"
#include "mshc/kernels.hpp"
#include "mshc/rng.hpp"

using namespace mshc;
using kernels::i64;

namespace {

std::vector<real> random_vec(Rng& rng, i64 n, double lo = -1.0,
                             double hi = 1.0) {
  std::vector<real> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return v;
}

void expect_equal(const std::vector<real>& a, const std::vector<real>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i] == b[i]);
  }
}

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("matmul par matches ref for every transpose combination") {
  Rng rng(11);
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      for (int acc = 0; acc < 2; ++acc) {
        const i64 m = 17, k = 23, n = 13;
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        auto c0 = random_vec(rng, m * n);
        auto c1 = c0;
        kernels::ref::matmul(a.data(), b.data(), c0.data(), m, k, n, ta, tb,
                             acc);
        kernels::par::matmul(a.data(), b.data(), c1.data(), m, k, n, ta, tb,
                             acc);
        expect_equal(c0, c1);
      }
    }
  }
}

TEST_CASE("matmul against a plain triple loop") {
  Rng rng(5);
  const i64 m = 9, k = 7, n = 8;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<real> got(static_cast<std::size_t>(m * n));
  kernels::par::matmul(a.data(), b.data(), got.data(), m, k, n, false, false,
                       false);
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) {
      double want = 0;
      for (i64 p = 0; p < k; ++p) {
        want += static_cast<double>(a[i * k + p]) *
                static_cast<double>(b[p * n + j]);
      }
      CHECK(static_cast<double>(got[i * n + j]) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d kernels par matches ref") {
  Rng rng(17);
  const i64 h = 11, w = 9, ci = 5, kh = 3, kw = 3, co = 6;
  auto x = random_vec(rng, h * w * ci);
  auto k = random_vec(rng, kh * kw * ci * co);
  std::vector<real> y0(static_cast<std::size_t>(h * w * co));
  auto y1 = y0;
  kernels::ref::conv2d_same(x.data(), k.data(), y0.data(), h, w, ci, kh, kw,
                            co);
  kernels::par::conv2d_same(x.data(), k.data(), y1.data(), h, w, ci, kh, kw,
                            co);
  expect_equal(y0, y1);

  auto gy = random_vec(rng, h * w * co);
  std::vector<real> gx0(static_cast<std::size_t>(h * w * ci), real(0));
  auto gx1 = gx0;
  kernels::ref::conv2d_same_grad_input(gy.data(), k.data(), gx0.data(), h, w,
                                       ci, kh, kw, co);
  kernels::par::conv2d_same_grad_input(gy.data(), k.data(), gx1.data(), h, w,
                                       ci, kh, kw, co);
  expect_equal(gx0, gx1);

  std::vector<real> gw0(static_cast<std::size_t>(kh * kw * ci * co), real(0));
  auto gw1 = gw0;
  kernels::ref::conv2d_same_grad_kernel(x.data(), gy.data(), gw0.data(), h, w,
                                        ci, kh, kw, co);
  kernels::par::conv2d_same_grad_kernel(x.data(), gy.data(), gw1.data(), h, w,
                                        ci, kh, kw, co);
  expect_equal(gw0, gw1);
}

TEST_CASE("pixel_sop and node_gsop par match ref") {
  Rng rng(23);
  const i64 h = 7, w = 6, c = 4;
  auto f = random_vec(rng, h * w * c);
  std::vector<real> o0(static_cast<std::size_t>(h * w * c * c));
  auto o1 = o0;
  kernels::ref::pixel_sop(f.data(), o0.data(), h, w, c, 2);
  kernels::par::pixel_sop(f.data(), o1.data(), h, w, c, 2);
  expect_equal(o0, o1);

  auto gout = random_vec(rng, h * w * c * c);
  std::vector<real> g0(static_cast<std::size_t>(h * w * c), real(0));
  auto g1 = g0;
  kernels::ref::pixel_sop_grad(f.data(), gout.data(), g0.data(), h, w, c, 2);
  kernels::par::pixel_sop_grad(f.data(), gout.data(), g1.data(), h, w, c, 2);
  expect_equal(g0, g1);

  GraphConfig cfg;
  cfg.k = 3;
  const i64 n = 20;
  Tensor feats({n, 3}, random_vec(rng, n * 3));
  KnnGraph graph = build_knn_graph(feats, cfg);
  auto hmat = random_vec(rng, n * c);
  std::vector<real> s0(static_cast<std::size_t>(n * c * c));
  auto s1 = s0;
  kernels::ref::node_gsop(hmat.data(), s0.data(), n, c,
                          graph.closed_ptr.data(), graph.closed_idx.data());
  kernels::par::node_gsop(hmat.data(), s1.data(), n, c,
                          graph.closed_ptr.data(), graph.closed_idx.data());
  expect_equal(s0, s1);

  auto gs = random_vec(rng, n * c * c);
  std::vector<real> gh0(static_cast<std::size_t>(n * c), real(0));
  auto gh1 = gh0;
  kernels::ref::node_gsop_grad(hmat.data(), gs.data(), gh0.data(), n, c,
                               graph.closed_ptr.data(),
                               graph.closed_idx.data());
  kernels::par::node_gsop_grad(hmat.data(), gs.data(), gh1.data(), n, c,
                               graph.closed_ptr.data(),
                               graph.closed_idx.data());
  expect_equal(gh0, gh1);
}

TEST_CASE("spmv and knn par match ref") {
  Rng rng(29);
  GraphConfig cfg;
  cfg.k = 4;
  const i64 n = 40, d = 5, c = 7;
  Tensor feats({n, d}, random_vec(rng, n * d));
  KnnGraph graph = build_knn_graph(feats, cfg);

  auto x = random_vec(rng, n * c);
  std::vector<real> y0(static_cast<std::size_t>(n * c));
  auto y1 = y0;
  kernels::ref::spmv(graph.laplacian->view(), x.data(), y0.data(), c);
  kernels::par::spmv(graph.laplacian->view(), x.data(), y1.data(), c);
  expect_equal(y0, y1);

  std::vector<i64> i0(static_cast<std::size_t>(n) * cfg.k);
  auto i1 = i0;
  kernels::ref::knn_neighbors(feats.data().data(), n, d, cfg.k, i0.data());
  kernels::par::knn_neighbors(feats.data().data(), n, d, cfg.k, i1.data());
  for (std::size_t i = 0; i < i0.size(); ++i) REQUIRE(i0[i] == i1[i]);
}

TEST_SUITE_END();
