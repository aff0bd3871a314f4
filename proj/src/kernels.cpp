#include "mshc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

// The ref kernels are deliberately naive: direct index arithmetic, one loop
// nest per definition. The par kernels restructure for cache locality and
// vectorization and parallelize their outermost independent loop, but keep
// the per-output-element accumulation order of the ref kernels so both sides
// agree to the last bit.

namespace mshc::kernels {

namespace {

inline i64 at2(i64 i, i64 j, i64 n) { return i * n + j; }

}  // namespace

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------

namespace ref {

void matmul(const real* a, const real* b, real* c, i64 m, i64 k, i64 n,
            bool trans_a, bool trans_b, bool accumulate) {
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) {
      real sum = accumulate ? c[at2(i, j, n)] : real(0);
      for (i64 p = 0; p < k; ++p) {
        const real av = trans_a ? a[at2(p, i, m)] : a[at2(i, p, k)];
        const real bv = trans_b ? b[at2(j, p, k)] : b[at2(p, j, n)];
        sum = std::fma(av, bv, sum);
      }
      c[at2(i, j, n)] = sum;
    }
  }
}

void conv2d_same(const real* x, const real* w, real* y, i64 h, i64 wd, i64 ci,
                 i64 kh, i64 kw, i64 co) {
  const i64 ph = kh / 2, pw = kw / 2;
  for (i64 i = 0; i < h; ++i) {
    for (i64 j = 0; j < wd; ++j) {
      for (i64 oc = 0; oc < co; ++oc) {
        real sum = 0;
        for (i64 a = 0; a < kh; ++a) {
          const i64 ii = i + a - ph;
          if (ii < 0 || ii >= h) continue;
          for (i64 b = 0; b < kw; ++b) {
            const i64 jj = j + b - pw;
            if (jj < 0 || jj >= wd) continue;
            for (i64 ic = 0; ic < ci; ++ic) {
              sum = std::fma(x[(ii * wd + jj) * ci + ic],
                             w[((a * kw + b) * ci + ic) * co + oc], sum);
            }
          }
        }
        y[(i * wd + j) * co + oc] = sum;
      }
    }
  }
}

void conv2d_same_grad_input(const real* gy, const real* w, real* gx, i64 h,
                            i64 wd, i64 ci, i64 kh, i64 kw, i64 co) {
  const i64 ph = kh / 2, pw = kw / 2;
  for (i64 p = 0; p < h; ++p) {
    for (i64 q = 0; q < wd; ++q) {
      for (i64 ic = 0; ic < ci; ++ic) {
        real sum = 0;
        for (i64 a = 0; a < kh; ++a) {
          const i64 i = p - a + ph;
          if (i < 0 || i >= h) continue;
          for (i64 b = 0; b < kw; ++b) {
            const i64 j = q - b + pw;
            if (j < 0 || j >= wd) continue;
            for (i64 oc = 0; oc < co; ++oc) {
              sum = std::fma(gy[(i * wd + j) * co + oc],
                             w[((a * kw + b) * ci + ic) * co + oc], sum);
            }
          }
        }
        gx[(p * wd + q) * ci + ic] += sum;
      }
    }
  }
}

void conv2d_same_grad_kernel(const real* x, const real* gy, real* gw, i64 h,
                             i64 wd, i64 ci, i64 kh, i64 kw, i64 co) {
  const i64 ph = kh / 2, pw = kw / 2;
  for (i64 a = 0; a < kh; ++a) {
    for (i64 b = 0; b < kw; ++b) {
      for (i64 ic = 0; ic < ci; ++ic) {
        for (i64 oc = 0; oc < co; ++oc) {
          real sum = 0;
          for (i64 i = 0; i < h; ++i) {
            const i64 ii = i + a - ph;
            if (ii < 0 || ii >= h) continue;
            for (i64 j = 0; j < wd; ++j) {
              const i64 jj = j + b - pw;
              if (jj < 0 || jj >= wd) continue;
              sum = std::fma(x[(ii * wd + jj) * ci + ic],
                             gy[(i * wd + j) * co + oc], sum);
            }
          }
          gw[((a * kw + b) * ci + ic) * co + oc] += sum;
        }
      }
    }
  }
}

void spmv(const CsrView& m, const real* x, real* y, i64 c) {
  for (i64 r = 0; r < m.rows; ++r) {
    for (i64 j = 0; j < c; ++j) {
      real sum = 0;
      for (i64 e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) {
        sum = std::fma(m.val[e], x[m.col[e] * c + j], sum);
      }
      y[r * c + j] = sum;
    }
  }
}

void pixel_sop(const real* f, real* out, i64 h, i64 w, i64 c, int radius) {
  const i64 r = radius;
  for (i64 pi = 0; pi < h; ++pi) {
    for (i64 pj = 0; pj < w; ++pj) {
      real* acc = out + (pi * w + pj) * c * c;
      std::fill(acc, acc + c * c, real(0));
      i64 count = 0;
      for (i64 qi = std::max<i64>(0, pi - r); qi <= std::min(h - 1, pi + r);
           ++qi) {
        for (i64 qj = std::max<i64>(0, pj - r); qj <= std::min(w - 1, pj + r);
             ++qj) {
          const real* fq = f + (qi * w + qj) * c;
          for (i64 u = 0; u < c; ++u) {
            for (i64 v = 0; v < c; ++v) {
              acc[u * c + v] = std::fma(fq[u], fq[v], acc[u * c + v]);
            }
          }
          ++count;
        }
      }
      const real scale = real(1) / static_cast<real>(count);
      for (i64 t = 0; t < c * c; ++t) acc[t] *= scale;
    }
  }
}

void pixel_sop_grad(const real* f, const real* gout, real* gf, i64 h, i64 w,
                    i64 c, int radius) {
  const i64 r = radius;
  // patch membership is symmetric: q in patch(p) iff p in patch(q)
  for (i64 qi = 0; qi < h; ++qi) {
    for (i64 qj = 0; qj < w; ++qj) {
      const real* fq = f + (qi * w + qj) * c;
      real* g = gf + (qi * w + qj) * c;
      for (i64 pi = std::max<i64>(0, qi - r); pi <= std::min(h - 1, qi + r);
           ++pi) {
        for (i64 pj = std::max<i64>(0, qj - r); pj <= std::min(w - 1, qj + r);
             ++pj) {
          const i64 mi = (std::min(h - 1, pi + r) - std::max<i64>(0, pi - r) + 1) *
                         (std::min(w - 1, pj + r) - std::max<i64>(0, pj - r) + 1);
          const real scale = real(1) / static_cast<real>(mi);
          const real* gp = gout + (pi * w + pj) * c * c;
          for (i64 u = 0; u < c; ++u) {
            real sum = 0;
            for (i64 v = 0; v < c; ++v) {
              sum = std::fma(gp[u * c + v] + gp[v * c + u], fq[v], sum);
            }
            g[u] = std::fma(scale, sum, g[u]);
          }
        }
      }
    }
  }
}

void node_gsop(const real* hmat, real* out, i64 n, i64 f, const i64* nb_ptr,
               const i64* nb_idx) {
  for (i64 i = 0; i < n; ++i) {
    real* acc = out + i * f * f;
    std::fill(acc, acc + f * f, real(0));
    for (i64 e = nb_ptr[i]; e < nb_ptr[i + 1]; ++e) {
      const real* hj = hmat + nb_idx[e] * f;
      for (i64 u = 0; u < f; ++u) {
        for (i64 v = 0; v < f; ++v) {
          acc[u * f + v] = std::fma(hj[u], hj[v], acc[u * f + v]);
        }
      }
    }
    const real scale = real(1) / static_cast<real>(nb_ptr[i + 1] - nb_ptr[i]);
    for (i64 t = 0; t < f * f; ++t) acc[t] *= scale;
  }
}

void node_gsop_grad(const real* hmat, const real* gout, real* gh, i64 n, i64 f,
                    const i64* nb_ptr, const i64* nb_idx) {
  // neighbor lists must be symmetric; the reverse edges of j are nb(j)
  for (i64 j = 0; j < n; ++j) {
    const real* hj = hmat + j * f;
    real* g = gh + j * f;
    for (i64 e = nb_ptr[j]; e < nb_ptr[j + 1]; ++e) {
      const i64 i = nb_idx[e];
      const real scale = real(1) / static_cast<real>(nb_ptr[i + 1] - nb_ptr[i]);
      const real* gi = gout + i * f * f;
      for (i64 u = 0; u < f; ++u) {
        real sum = 0;
        for (i64 v = 0; v < f; ++v) {
          sum = std::fma(gi[u * f + v] + gi[v * f + u], hj[v], sum);
        }
        g[u] = std::fma(scale, sum, g[u]);
      }
    }
  }
}

void knn_neighbors(const real* feats, i64 n, i64 d, int k, i64* out_idx) {
  std::vector<std::pair<real, i64>> dist;
  for (i64 i = 0; i < n; ++i) {
    dist.clear();
    dist.reserve(n - 1);
    for (i64 j = 0; j < n; ++j) {
      if (j == i) continue;
      real d2 = 0;
      for (i64 t = 0; t < d; ++t) {
        const real diff = feats[i * d + t] - feats[j * d + t];
        d2 = std::fma(diff, diff, d2);
      }
      dist.emplace_back(d2, j);
    }
    std::sort(dist.begin(), dist.end());
    for (int t = 0; t < k; ++t) out_idx[i * k + t] = dist[t].second;
  }
}

}  // namespace ref

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------

namespace par {

namespace {

// Row-major copy of op(A); lets every matmul variant run the same
// cache-friendly non-transposed inner loop.
std::vector<real> materialize(const real* a, i64 rows, i64 cols, bool trans) {
  std::vector<real> out(static_cast<std::size_t>(rows * cols));
  if (!trans) {
    std::memcpy(out.data(), a, sizeof(real) * rows * cols);
  } else {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < rows; ++i) {
      for (i64 j = 0; j < cols; ++j) out[i * cols + j] = a[j * rows + i];
    }
  }
  return out;
}

}  // namespace

namespace {

constexpr i64 kTileRows = 4;
constexpr i64 kTileCols = 16;

// One register tile: acc[4][16] lives in vector registers across the whole
// k sweep, so each b row is loaded once per four output rows and each c
// element is stored once. The fold over p stays ascending per element.
void matmul_tile(const real* a, const real* b, real* c, i64 k, i64 n,
                 bool accumulate, i64 i0, i64 j0) {
  real acc[kTileRows][kTileCols];
  for (i64 r = 0; r < kTileRows; ++r) {
    for (i64 t = 0; t < kTileCols; ++t) {
      acc[r][t] = accumulate ? c[(i0 + r) * n + j0 + t] : real(0);
    }
  }
  for (i64 p = 0; p < k; ++p) {
    const real* brow = b + p * n + j0;
    for (i64 r = 0; r < kTileRows; ++r) {
      const real av = a[(i0 + r) * k + p];
      for (i64 t = 0; t < kTileCols; ++t) {
        acc[r][t] = std::fma(av, brow[t], acc[r][t]);
      }
    }
  }
  for (i64 r = 0; r < kTileRows; ++r) {
    for (i64 t = 0; t < kTileCols; ++t) {
      c[(i0 + r) * n + j0 + t] = acc[r][t];
    }
  }
}

// Edge fallback with the same fold order.
void matmul_scalar(const real* a, const real* b, real* c, i64 k, i64 n,
                   bool accumulate, i64 i0, i64 i1, i64 j0, i64 j1) {
  for (i64 i = i0; i < i1; ++i) {
    for (i64 j = j0; j < j1; ++j) {
      real sum = accumulate ? c[i * n + j] : real(0);
      for (i64 p = 0; p < k; ++p) {
        sum = std::fma(a[i * k + p], b[p * n + j], sum);
      }
      c[i * n + j] = sum;
    }
  }
}

}  // namespace

void matmul(const real* a, const real* b, real* c, i64 m, i64 k, i64 n,
            bool trans_a, bool trans_b, bool accumulate) {
  std::vector<real> abuf, bbuf;
  if (trans_a) {
    abuf = materialize(a, m, k, true);
    a = abuf.data();
  }
  if (trans_b) {
    bbuf = materialize(b, k, n, true);
    b = bbuf.data();
  }
  const i64 mt = m - m % kTileRows;
  const i64 nt = n - n % kTileCols;
#pragma omp parallel for schedule(static)
  for (i64 i0 = 0; i0 < mt; i0 += kTileRows) {
    for (i64 j0 = 0; j0 < nt; j0 += kTileCols) {
      matmul_tile(a, b, c, k, n, accumulate, i0, j0);
    }
    if (nt < n) matmul_scalar(a, b, c, k, n, accumulate, i0, i0 + kTileRows,
                              nt, n);
  }
  if (mt < m) matmul_scalar(a, b, c, k, n, accumulate, mt, m, 0, n);
}

void conv2d_same(const real* x, const real* w, real* y, i64 h, i64 wd, i64 ci,
                 i64 kh, i64 kw, i64 co) {
  const i64 ph = kh / 2, pw = kw / 2;
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < h; ++i) {
    for (i64 j = 0; j < wd; ++j) {
      real* yrow = y + (i * wd + j) * co;
      std::fill(yrow, yrow + co, real(0));
      for (i64 a = 0; a < kh; ++a) {
        const i64 ii = i + a - ph;
        if (ii < 0 || ii >= h) continue;
        for (i64 b = 0; b < kw; ++b) {
          const i64 jj = j + b - pw;
          if (jj < 0 || jj >= wd) continue;
          const real* xp = x + (ii * wd + jj) * ci;
          const real* wp = w + (a * kw + b) * ci * co;
          for (i64 ic = 0; ic < ci; ++ic) {
            const real xv = xp[ic];
            const real* wrow = wp + ic * co;
            for (i64 oc = 0; oc < co; ++oc) {
              yrow[oc] = std::fma(xv, wrow[oc], yrow[oc]);
            }
          }
        }
      }
    }
  }
}

void conv2d_same_grad_input(const real* gy, const real* w, real* gx, i64 h,
                            i64 wd, i64 ci, i64 kh, i64 kw, i64 co) {
  const i64 ph = kh / 2, pw = kw / 2;
  // weights with ci/co swapped so the inner loop is unit stride
  std::vector<real> wt(static_cast<std::size_t>(kh * kw * ci * co));
  for (i64 t = 0; t < kh * kw; ++t) {
    for (i64 ic = 0; ic < ci; ++ic) {
      for (i64 oc = 0; oc < co; ++oc) {
        wt[(t * co + oc) * ci + ic] = w[(t * ci + ic) * co + oc];
      }
    }
  }
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < h; ++p) {
    for (i64 q = 0; q < wd; ++q) {
      real* grow = gx + (p * wd + q) * ci;
      for (i64 a = 0; a < kh; ++a) {
        const i64 i = p - a + ph;
        if (i < 0 || i >= h) continue;
        for (i64 b = 0; b < kw; ++b) {
          const i64 j = q - b + pw;
          if (j < 0 || j >= wd) continue;
          const real* gyp = gy + (i * wd + j) * co;
          const real* wp = wt.data() + (a * kw + b) * ci * co;
          for (i64 oc = 0; oc < co; ++oc) {
            const real gv = gyp[oc];
            const real* wrow = wp + oc * ci;
            for (i64 ic = 0; ic < ci; ++ic) {
              grow[ic] = std::fma(gv, wrow[ic], grow[ic]);
            }
          }
        }
      }
    }
  }
}

void conv2d_same_grad_kernel(const real* x, const real* gy, real* gw, i64 h,
                             i64 wd, i64 ci, i64 kh, i64 kw, i64 co) {
  const i64 ph = kh / 2, pw = kw / 2;
  for (i64 a = 0; a < kh; ++a) {
    for (i64 b = 0; b < kw; ++b) {
#pragma omp parallel for schedule(static)
      for (i64 ic = 0; ic < ci; ++ic) {
        real* gwp = gw + ((a * kw + b) * ci + ic) * co;
        for (i64 i = 0; i < h; ++i) {
          const i64 ii = i + a - ph;
          if (ii < 0 || ii >= h) continue;
          for (i64 j = 0; j < wd; ++j) {
            const i64 jj = j + b - pw;
            if (jj < 0 || jj >= wd) continue;
            const real xv = x[(ii * wd + jj) * ci + ic];
            const real* gyp = gy + (i * wd + j) * co;
            for (i64 oc = 0; oc < co; ++oc) {
              gwp[oc] = std::fma(xv, gyp[oc], gwp[oc]);
            }
          }
        }
      }
    }
  }
}

void spmv(const CsrView& m, const real* x, real* y, i64 c) {
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < m.rows; ++r) {
    real* yrow = y + r * c;
    std::fill(yrow, yrow + c, real(0));
    for (i64 e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) {
      const real v = m.val[e];
      const real* xrow = x + m.col[e] * c;
      for (i64 j = 0; j < c; ++j) {
        yrow[j] = std::fma(v, xrow[j], yrow[j]);
      }
    }
  }
}

void pixel_sop(const real* f, real* out, i64 h, i64 w, i64 c, int radius) {
  const i64 r = radius;
#pragma omp parallel for schedule(static)
  for (i64 pi = 0; pi < h; ++pi) {
    for (i64 pj = 0; pj < w; ++pj) {
      real* acc = out + (pi * w + pj) * c * c;
      std::fill(acc, acc + c * c, real(0));
      i64 count = 0;
      for (i64 qi = std::max<i64>(0, pi - r); qi <= std::min(h - 1, pi + r);
           ++qi) {
        for (i64 qj = std::max<i64>(0, pj - r); qj <= std::min(w - 1, pj + r);
             ++qj) {
          const real* fq = f + (qi * w + qj) * c;
          // upper triangle only; mirrored below
          for (i64 u = 0; u < c; ++u) {
            const real fu = fq[u];
            real* arow = acc + u * c;
            for (i64 v = u; v < c; ++v) {
              arow[v] = std::fma(fu, fq[v], arow[v]);
            }
          }
          ++count;
        }
      }
      const real scale = real(1) / static_cast<real>(count);
      for (i64 u = 0; u < c; ++u) {
        for (i64 v = u; v < c; ++v) {
          const real s = acc[u * c + v] * scale;
          acc[u * c + v] = s;
          acc[v * c + u] = s;
        }
      }
    }
  }
}

void pixel_sop_grad(const real* f, const real* gout, real* gf, i64 h, i64 w,
                    i64 c, int radius) {
  const i64 r = radius;
#pragma omp parallel for schedule(static)
  for (i64 qi = 0; qi < h; ++qi) {
    for (i64 qj = 0; qj < w; ++qj) {
      const real* fq = f + (qi * w + qj) * c;
      real* g = gf + (qi * w + qj) * c;
      for (i64 pi = std::max<i64>(0, qi - r); pi <= std::min(h - 1, qi + r);
           ++pi) {
        for (i64 pj = std::max<i64>(0, qj - r); pj <= std::min(w - 1, qj + r);
             ++pj) {
          const i64 mi = (std::min(h - 1, pi + r) - std::max<i64>(0, pi - r) + 1) *
                         (std::min(w - 1, pj + r) - std::max<i64>(0, pj - r) + 1);
          const real scale = real(1) / static_cast<real>(mi);
          const real* gp = gout + (pi * w + pj) * c * c;
          for (i64 u = 0; u < c; ++u) {
            real sum = 0;
            const real* grow = gp + u * c;
            for (i64 v = 0; v < c; ++v) {
              sum = std::fma(grow[v] + gp[v * c + u], fq[v], sum);
            }
            g[u] = std::fma(scale, sum, g[u]);
          }
        }
      }
    }
  }
}

void node_gsop(const real* hmat, real* out, i64 n, i64 f, const i64* nb_ptr,
               const i64* nb_idx) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    real* acc = out + i * f * f;
    std::fill(acc, acc + f * f, real(0));
    for (i64 e = nb_ptr[i]; e < nb_ptr[i + 1]; ++e) {
      const real* hj = hmat + nb_idx[e] * f;
      for (i64 u = 0; u < f; ++u) {
        const real hu = hj[u];
        real* arow = acc + u * f;
        for (i64 v = u; v < f; ++v) {
          arow[v] = std::fma(hu, hj[v], arow[v]);
        }
      }
    }
    const real scale = real(1) / static_cast<real>(nb_ptr[i + 1] - nb_ptr[i]);
    for (i64 u = 0; u < f; ++u) {
      for (i64 v = u; v < f; ++v) {
        const real s = acc[u * f + v] * scale;
        acc[u * f + v] = s;
        acc[v * f + u] = s;
      }
    }
  }
}

void node_gsop_grad(const real* hmat, const real* gout, real* gh, i64 n, i64 f,
                    const i64* nb_ptr, const i64* nb_idx) {
#pragma omp parallel for schedule(static)
  for (i64 j = 0; j < n; ++j) {
    const real* hj = hmat + j * f;
    real* g = gh + j * f;
    for (i64 e = nb_ptr[j]; e < nb_ptr[j + 1]; ++e) {
      const i64 i = nb_idx[e];
      const real scale = real(1) / static_cast<real>(nb_ptr[i + 1] - nb_ptr[i]);
      const real* gi = gout + i * f * f;
      for (i64 u = 0; u < f; ++u) {
        real sum = 0;
        const real* grow = gi + u * f;
        for (i64 v = 0; v < f; ++v) {
          sum = std::fma(grow[v] + gi[v * f + u], hj[v], sum);
        }
        g[u] = std::fma(scale, sum, g[u]);
      }
    }
  }
}

void knn_neighbors(const real* feats, i64 n, i64 d, int k, i64* out_idx) {
#pragma omp parallel
  {
    std::vector<std::pair<real, i64>> dist;
    dist.reserve(n);
#pragma omp for schedule(static)
    for (i64 i = 0; i < n; ++i) {
      dist.clear();
      const real* fi = feats + i * d;
      for (i64 j = 0; j < n; ++j) {
        if (j == i) continue;
        const real* fj = feats + j * d;
        real d2 = 0;
        for (i64 t = 0; t < d; ++t) {
          const real diff = fi[t] - fj[t];
          d2 = std::fma(diff, diff, d2);
        }
        dist.emplace_back(d2, j);
      }
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      for (int t = 0; t < k; ++t) out_idx[i * k + t] = dist[t].second;
    }
  }
}

}  // namespace par

}  // namespace mshc::kernels
