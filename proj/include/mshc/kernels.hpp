#pragma once

#include <cstdint>

// Dense numeric kernels behind the tensor ops. Every kernel exists twice:
// kernels::ref holds the plain serial loops, kernels::par the OpenMP
// versions. Both share the same per-element arithmetic order, so results are
// bitwise identical and independent of the thread count; the test suite
// asserts this and the bench target times both.
//
// Shared conventions:
//   matmul        C = op(A)[m x k] * op(B)[k x n]; accumulate adds into C
//   conv2d_same   y[H,W,Co] = conv(x[H,W,Ci], w[kh,kw,Ci,Co]), stride 1,
//                 zero padding, odd kernel extents
//   spmv          y[rows x c] = M * x[cols x c], M in CSR form
//   pixel_sop     out[p,:] = (1/m_p) sum_{q in patch(p)} f_q f_q^T over a
//                 square window of the given radius, clipped at the borders;
//                 out is [H*W, C*C] row-major
//   node_gsop     out[i,:] = (1/|nb(i)|) sum_{j in nb(i)} h_j h_j^T with nb
//                 the closed neighborhood lists in CSR form
//   knn_neighbors k nearest distinct neighbors per row of feats[n x d] by
//                 squared Euclidean distance, ties toward the lower index;
//                 out_idx is [n x k], each row ordered by (distance, index)
//
// All _grad kernels accumulate (+=) into their output buffer.

namespace mshc {

#ifdef MSHC_REAL32
using real = float;
#else
using real = double;
#endif

namespace kernels {

using i64 = std::int64_t;

struct CsrView {
  const i64* row_ptr;
  const i64* col;
  const real* val;
  i64 rows;
  i64 cols;
};

namespace ref {

void matmul(const real* a, const real* b, real* c, i64 m, i64 k, i64 n,
            bool trans_a, bool trans_b, bool accumulate);
void conv2d_same(const real* x, const real* w, real* y, i64 h, i64 wd, i64 ci,
                 i64 kh, i64 kw, i64 co);
void conv2d_same_grad_input(const real* gy, const real* w, real* gx, i64 h,
                            i64 wd, i64 ci, i64 kh, i64 kw, i64 co);
void conv2d_same_grad_kernel(const real* x, const real* gy, real* gw, i64 h,
                             i64 wd, i64 ci, i64 kh, i64 kw, i64 co);
void spmv(const CsrView& m, const real* x, real* y, i64 c);
void pixel_sop(const real* f, real* out, i64 h, i64 w, i64 c, int radius);
void pixel_sop_grad(const real* f, const real* gout, real* gf, i64 h, i64 w,
                    i64 c, int radius);
void node_gsop(const real* hmat, real* out, i64 n, i64 f, const i64* nb_ptr,
               const i64* nb_idx);
void node_gsop_grad(const real* hmat, const real* gout, real* gh, i64 n, i64 f,
                    const i64* nb_ptr, const i64* nb_idx);
void knn_neighbors(const real* feats, i64 n, i64 d, int k, i64* out_idx);

}  // namespace ref

namespace par {

void matmul(const real* a, const real* b, real* c, i64 m, i64 k, i64 n,
            bool trans_a, bool trans_b, bool accumulate);
void conv2d_same(const real* x, const real* w, real* y, i64 h, i64 wd, i64 ci,
                 i64 kh, i64 kw, i64 co);
void conv2d_same_grad_input(const real* gy, const real* w, real* gx, i64 h,
                            i64 wd, i64 ci, i64 kh, i64 kw, i64 co);
void conv2d_same_grad_kernel(const real* x, const real* gy, real* gw, i64 h,
                             i64 wd, i64 ci, i64 kh, i64 kw, i64 co);
void spmv(const CsrView& m, const real* x, real* y, i64 c);
void pixel_sop(const real* f, real* out, i64 h, i64 w, i64 c, int radius);
void pixel_sop_grad(const real* f, const real* gout, real* gf, i64 h, i64 w,
                    i64 c, int radius);
void node_gsop(const real* hmat, real* out, i64 n, i64 f, const i64* nb_ptr,
               const i64* nb_idx);
void node_gsop_grad(const real* hmat, const real* gout, real* gh, i64 n, i64 f,
                    const i64* nb_ptr, const i64* nb_idx);
void knn_neighbors(const real* feats, i64 n, i64 d, int k, i64* out_idx);

}  // namespace par

}  // namespace kernels
}  // namespace mshc
