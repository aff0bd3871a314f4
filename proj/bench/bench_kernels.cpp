// Timing comparison of the serial reference kernels against the OpenMP ones,
// on shapes representative of a training step.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mshc/graph.hpp"
#include "mshc/kernels.hpp"
#include "mshc/rng.hpp"

using namespace mshc;
using kernels::i64;

namespace {

std::vector<real> random_vec(Rng& rng, i64 n) {
  std::vector<real> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-1.0, 1.0));
  return v;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void report(const std::string& name, double serial, double parallel) {
  std::printf("%-22s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(),
              serial * 1e3, parallel * 1e3, serial / parallel);
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp",
              "speedup");

  {
    const i64 m = 1024, k = 544, n = 512;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<real> c(static_cast<std::size_t>(m * n));
    report("matmul 1024x544x512",
           time_of([&] {
             kernels::ref::matmul(a.data(), b.data(), c.data(), m, k, n,
                                  false, false, false);
           }, 3),
           time_of([&] {
             kernels::par::matmul(a.data(), b.data(), c.data(), m, k, n,
                                  false, false, false);
           }, 3));
  }

  {
    const i64 h = 32, w = 32, ci = 32, co = 64;
    auto x = random_vec(rng, h * w * ci);
    auto k = random_vec(rng, 3 * 3 * ci * co);
    std::vector<real> y(static_cast<std::size_t>(h * w * co));
    report("conv2d 32x32 32->64",
           time_of([&] {
             kernels::ref::conv2d_same(x.data(), k.data(), y.data(), h, w,
                                       ci, 3, 3, co);
           }, 5),
           time_of([&] {
             kernels::par::conv2d_same(x.data(), k.data(), y.data(), h, w,
                                       ci, 3, 3, co);
           }, 5));
  }

  {
    const i64 h = 32, w = 32, c = 32;
    auto f = random_vec(rng, h * w * c);
    std::vector<real> out(static_cast<std::size_t>(h * w * c * c));
    report("pixel_sop 32x32x32",
           time_of([&] {
             kernels::ref::pixel_sop(f.data(), out.data(), h, w, c, 2);
           }, 3),
           time_of([&] {
             kernels::par::pixel_sop(f.data(), out.data(), h, w, c, 2);
           }, 3));
  }

  {
    const i64 n = 1024, d = 8;
    auto feats = random_vec(rng, n * d);
    GraphConfig cfg;
    cfg.k = 10;
    Tensor ft({n, d}, feats);
    KnnGraph g = build_knn_graph(ft, cfg);
    auto x = random_vec(rng, n * 64);
    std::vector<real> y(static_cast<std::size_t>(n * 64));
    report("spmv L_sym n=1024 c=64",
           time_of([&] {
             kernels::ref::spmv(g.laplacian->view(), x.data(), y.data(), 64);
           }, 20),
           time_of([&] {
             kernels::par::spmv(g.laplacian->view(), x.data(), y.data(), 64);
           }, 20));

    auto h16 = random_vec(rng, n * 16);
    std::vector<real> gs(static_cast<std::size_t>(n * 256));
    report("node_gsop n=1024 f=16",
           time_of([&] {
             kernels::ref::node_gsop(h16.data(), gs.data(), n, 16,
                                     g.closed_ptr.data(),
                                     g.closed_idx.data());
           }, 10),
           time_of([&] {
             kernels::par::node_gsop(h16.data(), gs.data(), n, 16,
                                     g.closed_ptr.data(),
                                     g.closed_idx.data());
           }, 10));

    std::vector<i64> idx(static_cast<std::size_t>(n) * 10);
    report("knn n=1024 d=8 k=10",
           time_of([&] {
             kernels::ref::knn_neighbors(feats.data(), n, d, 10, idx.data());
           }, 3),
           time_of([&] {
             kernels::par::knn_neighbors(feats.data(), n, d, 10, idx.data());
           }, 3));
  }

  return 0;
}
