#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mshc/kernels.hpp"

namespace mshc {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

i64 shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

struct TensorNode {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // same length as value while tracked, else empty
  bool tracked = false;
  Tape* tape = nullptr;  // recording tape for intermediates, null for leaves
};

// Value-semantics handle onto a shared node. Ops executed while a Tape is
// active record a backward rule whenever an input is tracked; everything else
// is plain eager arithmetic.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, real v);
  static Tensor scalar(real v);
  // tracked leaf (model parameter or gradcheck input); grad accumulates
  // across backward passes until zero_grad
  static Tensor param(Shape shape, std::vector<real> data);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  i64 dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  i64 size() const { return static_cast<i64>(n_->value.size()); }

  const std::vector<real>& data() const { return n_->value; }
  std::vector<real>& mutable_data() { return n_->value; }
  real item() const;

  bool tracked() const { return n_ && n_->tracked; }
  const std::vector<real>& grad() const;
  std::vector<real>& mutable_grad() { return n_->grad; }
  void zero_grad();

  const std::shared_ptr<TensorNode>& node() const { return n_; }
  static Tensor wrap(std::shared_ptr<TensorNode> n);
  // output factory for custom ops: tracked with a zeroed grad when tape is
  // non-null
  static Tensor op_output(Shape shape, std::vector<real> value, Tape* tape);

 private:
  std::shared_ptr<TensorNode> n_;
};

namespace detail {
// Tape to record an op on: the active tape when any input is tracked;
// throws if tracked inputs belong to a different tape.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);
}  // namespace detail

// Reverse-mode tape: an ordered list of backward rules. Rules are recorded in
// forward order (inputs always precede their consumers), so replaying them in
// reverse accumulates exact gradients into every tracked node. backward()
// consumes the tape; running it twice without re-recording is an error.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> rule) { ops_.push_back(std::move(rule)); }
  std::size_t num_ops() const { return ops_.size(); }
  void backward(const Tensor& loss);
  void clear() { ops_.clear(); }

  static Tape* active();

 private:
  std::vector<std::function<void()>> ops_;
};

// Activates a tape for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// --- elementwise and structural ops ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
// broadcast a [c] vector over the trailing axis of a [..., c] tensor
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, real slope = real(0.01));
Tensor signed_sqrt(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // rank 2
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, i64 start, i64 len);

// --- reductions ---

Tensor reduce_sum(const Tensor& a);  // -> scalar
Tensor reduce_max(const Tensor& a);  // -> scalar, grad to first max

// --- linear algebra / nn ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, int axis);
Tensor conv2d_same(const Tensor& x, const Tensor& kernel);
Tensor maxpool2d_same(const Tensor& x, int window = 2);  // stride 1

// Runs loss's tape. Exposed as a free function to mirror loss.backward()
// style call sites.
void backward(const Tensor& loss);

}  // namespace mshc
