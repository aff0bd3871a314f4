#include "mshc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mshc/errors.hpp"

namespace mshc {

namespace {

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(Shape shape, std::vector<real> value) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

using detail::recording_tape;

Tensor make_output(Shape shape, std::vector<real> value, Tape* t) {
  return Tensor::op_output(std::move(shape), std::move(value), t);
}

bool wants_grad(const NodePtr& n) { return n->tracked; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_axis(const Tensor& a, int axis, const char* op) {
  if (axis < 0 || axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(a.shape()));
  }
}

}  // namespace

i64 shape_numel(const Shape& s) {
  i64 n = 1;
  for (i64 e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// --- Tensor ---

Tensor::Tensor(Shape shape, std::vector<real> data) {
  if (shape_numel(shape) != static_cast<i64>(data.size())) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  n_ = make_node(std::move(shape), std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  const i64 n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<real>(n, real(0)));
}

Tensor Tensor::full(Shape shape, real v) {
  const i64 n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<real>(n, v));
}

Tensor Tensor::scalar(real v) { return Tensor(Shape{}, std::vector<real>{v}); }

Tensor Tensor::param(Shape shape, std::vector<real> data) {
  Tensor t(std::move(shape), std::move(data));
  t.n_->tracked = true;
  t.n_->grad.assign(t.n_->value.size(), real(0));
  return t;
}

real Tensor::item() const {
  if (!defined() || size() != 1) {
    throw ContractError("item() requires a single-element tensor");
  }
  return n_->value[0];
}

const std::vector<real>& Tensor::grad() const {
  if (!tracked()) throw ContractError("grad() on untracked tensor");
  return n_->grad;
}

void Tensor::zero_grad() {
  if (tracked()) std::fill(n_->grad.begin(), n_->grad.end(), real(0));
}

Tensor Tensor::wrap(std::shared_ptr<TensorNode> n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

Tensor Tensor::op_output(Shape shape, std::vector<real> value, Tape* tape) {
  NodePtr n = make_node(std::move(shape), std::move(value));
  if (tape != nullptr) {
    n->tracked = true;
    n->tape = tape;
    n->grad.assign(n->value.size(), real(0));
  }
  return Tensor::wrap(std::move(n));
}

namespace detail {

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* t = g_active_tape;
  bool any_tracked = false;
  for (const Tensor* in : inputs) {
    if (!in->defined() || !in->tracked()) continue;
    any_tracked = true;
    Tape* owner = in->node()->tape;
    if (owner != nullptr && t != nullptr && owner != t) {
      throw ContractError("tensor belongs to a different tape");
    }
  }
  return any_tracked ? t : nullptr;
}

}  // namespace detail

// --- Tape ---

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.tracked() || loss.node()->tape != this) {
    throw ContractError("backward: loss was not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " +
                        shape_str(loss.shape()));
  }
  if (ops_.empty()) {
    throw ContractError("backward: tape is empty (already consumed?)");
  }
  loss.node()->grad[0] = real(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.tracked() || loss.node()->tape == nullptr) {
    throw ContractError("backward: loss has no tape");
  }
  loss.node()->tape->backward(loss);
}

// --- elementwise ---

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tape* t = recording_tape({&a, &b});
  std::vector<real> out(a.data());
  for (i64 i = 0; i < a.size(); ++i) out[i] += b.data()[i];
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), bn = b.node(), yn = y.node()] {
      const auto& g = yn->grad;
      if (wants_grad(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      }
      if (wants_grad(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tape* t = recording_tape({&a, &b});
  std::vector<real> out(a.data());
  for (i64 i = 0; i < a.size(); ++i) out[i] -= b.data()[i];
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), bn = b.node(), yn = y.node()] {
      const auto& g = yn->grad;
      if (wants_grad(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      }
      if (wants_grad(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tape* t = recording_tape({&a, &b});
  std::vector<real> out(a.data());
  for (i64 i = 0; i < a.size(); ++i) out[i] *= b.data()[i];
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), bn = b.node(), yn = y.node()] {
      const auto& g = yn->grad;
      if (wants_grad(an)) {
        for (std::size_t i = 0; i < g.size(); ++i)
          an->grad[i] += g[i] * bn->value[i];
      }
      if (wants_grad(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i)
          bn->grad[i] += g[i] * an->value[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& a, real s) {
  Tape* t = recording_tape({&a});
  std::vector<real> out(a.data());
  for (real& v : out) v *= s;
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), yn = y.node(), s] {
      if (!wants_grad(an)) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[i] += s * yn->grad[i];
    });
  }
  return y;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rank() != 1 || a.rank() < 1 || a.dim(a.rank() - 1) != v.dim(0)) {
    throw DimensionError("add_rowvec: incompatible shapes " +
                         shape_str(a.shape()) + " vs " + shape_str(v.shape()));
  }
  Tape* t = recording_tape({&a, &v});
  const i64 c = v.dim(0);
  const i64 rows = a.size() / c;
  std::vector<real> out(a.data());
  for (i64 r = 0; r < rows; ++r) {
    for (i64 j = 0; j < c; ++j) out[r * c + j] += v.data()[j];
  }
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), vn = v.node(), yn = y.node(), rows, c] {
      const auto& g = yn->grad;
      if (wants_grad(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      }
      if (wants_grad(vn)) {
        for (i64 r = 0; r < rows; ++r) {
          for (i64 j = 0; j < c; ++j) vn->grad[j] += g[r * c + j];
        }
      }
    });
  }
  return y;
}

Tensor relu(const Tensor& a) {
  Tape* t = recording_tape({&a});
  std::vector<real> out(a.data());
  for (real& v : out) v = v > real(0) ? v : real(0);
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), yn = y.node()] {
      if (!wants_grad(an)) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->value[i] > real(0)) an->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor leaky_relu(const Tensor& a, real slope) {
  Tape* t = recording_tape({&a});
  std::vector<real> out(a.data());
  for (real& v : out) v = v > real(0) ? v : slope * v;
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), yn = y.node(), slope] {
      if (!wants_grad(an)) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        an->grad[i] += yn->grad[i] * (an->value[i] > real(0) ? real(1) : slope);
      }
    });
  }
  return y;
}

Tensor signed_sqrt(const Tensor& a) {
  Tape* t = recording_tape({&a});
  std::vector<real> out(a.data());
  for (real& v : out) {
    v = v >= real(0) ? std::sqrt(v) : -std::sqrt(-v);
  }
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    // d/dx sign(x)*sqrt(|x|) = 1/(2*sqrt(|x|)); the denominator is floored
    // to keep gradients finite at the origin
    t->record([an = a.node(), yn = y.node()] {
      if (!wants_grad(an)) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        const real mag = std::max(std::abs(yn->value[i]), real(1e-6));
        an->grad[i] += yn->grad[i] / (real(2) * mag);
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  }
  Tape* t = recording_tape({&a});
  Tensor y = make_output(std::move(shape), a.data(), t);
  if (t) {
    t->record([an = a.node(), yn = y.node()] {
      if (!wants_grad(an)) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[i] += yn->grad[i];
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose: expected rank 2, got " +
                         shape_str(a.shape()));
  }
  Tape* t = recording_tape({&a});
  const i64 m = a.dim(0), n = a.dim(1);
  std::vector<real> out(static_cast<std::size_t>(m * n));
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  }
  Tensor y = make_output({n, m}, std::move(out), t);
  if (t) {
    t->record([an = a.node(), yn = y.node(), m, n] {
      if (!wants_grad(an)) return;
      for (i64 i = 0; i < m; ++i) {
        for (i64 j = 0; j < n; ++j) an->grad[i * n + j] += yn->grad[j * m + i];
      }
    });
  }
  return y;
}

namespace {

// outer extent before `axis`, inner extent after it
std::pair<i64, i64> outer_inner(const Shape& s, int axis) {
  i64 outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
    inner *= s[static_cast<std::size_t>(i)];
  return {outer, inner};
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  check_axis(parts[0], axis, "concat");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  i64 axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank()) {
      throw DimensionError("concat: rank mismatch");
    }
    for (int i = 0; i < p.rank(); ++i) {
      if (i != axis && p.dim(i) != first[static_cast<std::size_t>(i)]) {
        throw DimensionError("concat: non-concat extent mismatch " +
                             shape_str(p.shape()) + " vs " + shape_str(first));
      }
    }
    axis_total += p.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  Tape* t = nullptr;
  for (const Tensor& p : parts) {
    if (Tape* pt = recording_tape({&p}); pt != nullptr) t = pt;
  }

  auto [outer, inner] = outer_inner(out_shape, axis);
  std::vector<real> out(static_cast<std::size_t>(shape_numel(out_shape)));
  i64 offset = 0;
  for (const Tensor& p : parts) {
    const i64 len = p.dim(axis);
    for (i64 o = 0; o < outer; ++o) {
      const real* src = p.data().data() + o * len * inner;
      real* dst = out.data() + (o * axis_total + offset) * inner;
      std::copy(src, src + len * inner, dst);
    }
    offset += len;
  }
  Tensor y = make_output(out_shape, std::move(out), t);
  if (t) {
    std::vector<NodePtr> nodes;
    std::vector<i64> lens;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      lens.push_back(p.dim(axis));
    }
    t->record([nodes, lens, yn = y.node(), outer = outer, inner = inner,
               axis_total] {
      i64 off = 0;
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        const i64 len = lens[pi];
        if (wants_grad(nodes[pi])) {
          for (i64 o = 0; o < outer; ++o) {
            const real* src = yn->grad.data() + (o * axis_total + off) * inner;
            real* dst = nodes[pi]->grad.data() + o * len * inner;
            for (i64 i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        off += len;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& a, int axis, i64 start, i64 len) {
  check_axis(a, axis, "slice");
  const i64 extent = a.dim(axis);
  if (start < 0 || len < 0 || start + len > extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of extent " +
                         std::to_string(extent));
  }
  Tape* t = recording_tape({&a});
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  auto [outer, inner] = outer_inner(a.shape(), axis);
  std::vector<real> out(static_cast<std::size_t>(shape_numel(out_shape)));
  for (i64 o = 0; o < outer; ++o) {
    const real* src = a.data().data() + (o * extent + start) * inner;
    std::copy(src, src + len * inner, out.data() + o * len * inner);
  }
  Tensor y = make_output(out_shape, std::move(out), t);
  if (t) {
    t->record([an = a.node(), yn = y.node(), outer = outer, inner = inner,
               extent, start, len] {
      if (!wants_grad(an)) return;
      for (i64 o = 0; o < outer; ++o) {
        const real* src = yn->grad.data() + o * len * inner;
        real* dst = an->grad.data() + (o * extent + start) * inner;
        for (i64 i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

// --- reductions ---

Tensor reduce_sum(const Tensor& a) {
  Tape* t = recording_tape({&a});
  real sum = 0;
  for (real v : a.data()) sum += v;
  Tensor y = make_output(Shape{}, {sum}, t);
  if (t) {
    t->record([an = a.node(), yn = y.node()] {
      if (!wants_grad(an)) return;
      const real g = yn->grad[0];
      for (real& gv : an->grad) gv += g;
    });
  }
  return y;
}

Tensor reduce_max(const Tensor& a) {
  if (a.size() == 0) throw ContractError("reduce_max: empty tensor");
  Tape* t = recording_tape({&a});
  i64 arg = 0;
  real best = a.data()[0];
  for (i64 i = 1; i < a.size(); ++i) {
    if (a.data()[i] > best) {
      best = a.data()[i];
      arg = i;
    }
  }
  Tensor y = make_output(Shape{}, {best}, t);
  if (t) {
    t->record([an = a.node(), yn = y.node(), arg] {
      if (wants_grad(an)) an->grad[arg] += yn->grad[0];
    });
  }
  return y;
}

// --- linear algebra / nn ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tape* t = recording_tape({&a, &b});
  const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<real> out(static_cast<std::size_t>(m * n));
  kernels::par::matmul(a.data().data(), b.data().data(), out.data(), m, k, n,
                       false, false, false);
  Tensor y = make_output({m, n}, std::move(out), t);
  if (t) {
    t->record([an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
      // dA = dC * B^T, dB = A^T * dC
      if (wants_grad(an)) {
        kernels::par::matmul(yn->grad.data(), bn->value.data(),
                             an->grad.data(), m, n, k, false, true, true);
      }
      if (wants_grad(bn)) {
        kernels::par::matmul(an->value.data(), yn->grad.data(),
                             bn->grad.data(), k, m, n, true, false, true);
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& a, int axis) {
  check_axis(a, axis, "softmax");
  Tape* t = recording_tape({&a});
  const i64 len = a.dim(axis);
  auto [outer, inner] = outer_inner(a.shape(), axis);
  std::vector<real> out(a.data().size());
  for (i64 o = 0; o < outer; ++o) {
    for (i64 i = 0; i < inner; ++i) {
      const i64 base = o * len * inner + i;
      real mx = a.data()[base];
      for (i64 l = 1; l < len; ++l)
        mx = std::max(mx, a.data()[base + l * inner]);
      real denom = 0;
      for (i64 l = 0; l < len; ++l) {
        const real e = std::exp(a.data()[base + l * inner] - mx);
        out[base + l * inner] = e;
        denom += e;
      }
      for (i64 l = 0; l < len; ++l) out[base + l * inner] /= denom;
    }
  }
  Tensor y = make_output(a.shape(), std::move(out), t);
  if (t) {
    t->record([an = a.node(), yn = y.node(), len, outer = outer,
               inner = inner] {
      if (!wants_grad(an)) return;
      for (i64 o = 0; o < outer; ++o) {
        for (i64 i = 0; i < inner; ++i) {
          const i64 base = o * len * inner + i;
          real dot = 0;
          for (i64 l = 0; l < len; ++l) {
            dot += yn->grad[base + l * inner] * yn->value[base + l * inner];
          }
          for (i64 l = 0; l < len; ++l) {
            const i64 at = base + l * inner;
            an->grad[at] += yn->value[at] * (yn->grad[at] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor conv2d_same(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw DimensionError("conv2d: expected x[HxWxC] and kernel[khxkwxCixCo]");
  }
  const i64 h = x.dim(0), w = x.dim(1), ci = x.dim(2);
  const i64 kh = kernel.dim(0), kw = kernel.dim(1);
  if (kernel.dim(2) != ci) {
    throw DimensionError("conv2d: input channels " + std::to_string(ci) +
                         " vs kernel " + std::to_string(kernel.dim(2)));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("conv2d: same padding requires odd kernel extents, got " +
                      shape_str(kernel.shape()));
  }
  const i64 co = kernel.dim(3);
  Tape* t = recording_tape({&x, &kernel});
  std::vector<real> out(static_cast<std::size_t>(h * w * co));
  kernels::par::conv2d_same(x.data().data(), kernel.data().data(), out.data(),
                            h, w, ci, kh, kw, co);
  Tensor y = make_output({h, w, co}, std::move(out), t);
  if (t) {
    t->record([xn = x.node(), kn = kernel.node(), yn = y.node(), h, w, ci, kh,
               kw, co] {
      if (wants_grad(xn)) {
        kernels::par::conv2d_same_grad_input(yn->grad.data(), kn->value.data(),
                                             xn->grad.data(), h, w, ci, kh, kw,
                                             co);
      }
      if (wants_grad(kn)) {
        kernels::par::conv2d_same_grad_kernel(xn->value.data(),
                                              yn->grad.data(), kn->grad.data(),
                                              h, w, ci, kh, kw, co);
      }
    });
  }
  return y;
}

Tensor maxpool2d_same(const Tensor& x, int window) {
  if (x.rank() != 3) {
    throw DimensionError("maxpool2d: expected x[HxWxC], got " +
                         shape_str(x.shape()));
  }
  if (window < 1) throw ConfigError("maxpool2d: window must be >= 1");
  const i64 h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tape* t = recording_tape({&x});
  std::vector<real> out(x.data().size());
  // stride 1, window anchored at the cell, clipped at the bottom/right edge;
  // ties resolve to the lowest linear index (first strict max wins)
  auto argmax_of = std::make_shared<std::vector<i64>>(x.data().size());
  for (i64 i = 0; i < h; ++i) {
    for (i64 j = 0; j < w; ++j) {
      for (i64 ch = 0; ch < c; ++ch) {
        real best = 0;
        i64 arg = -1;
        for (i64 a = i; a < std::min<i64>(h, i + window); ++a) {
          for (i64 b = j; b < std::min<i64>(w, j + window); ++b) {
            const i64 at = (a * w + b) * c + ch;
            if (arg < 0 || x.data()[at] > best) {
              best = x.data()[at];
              arg = at;
            }
          }
        }
        const i64 at = (i * w + j) * c + ch;
        out[at] = best;
        (*argmax_of)[at] = arg;
      }
    }
  }
  Tensor y = make_output({h, w, c}, std::move(out), t);
  if (t) {
    t->record([xn = x.node(), yn = y.node(), argmax_of] {
      if (!wants_grad(xn)) return;
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        xn->grad[(*argmax_of)[i]] += yn->grad[i];
      }
    });
  }
  return y;
}

}  // namespace mshc
