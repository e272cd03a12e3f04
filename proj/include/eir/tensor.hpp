#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace eir {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;   // contiguous, row-major
  std::vector<double> grad;   // empty until first accumulation
  bool requires_grad = false;
};

/// Dense 64-bit float tensor with shared-value semantics. Values are
/// immutable once an op has consumed the tensor; only gradients accumulate.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  /// 2-d helpers; a 1-d tensor counts as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& operator[](std::size_t i) { return impl_->data[i]; }

  /// Value of a scalar (size-1) tensor.
  double item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  /// Gradient buffer, allocated (zero-filled) on first access. Tensor is a
  /// shared handle, so gradient accumulation works through const copies.
  std::vector<double>& grad() const;
  const std::vector<double>& grad_ref() const { return impl_->grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  /// Same values, detached from gradient tracking (deep copy).
  Tensor detach() const;
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode tape. Ops append their backward rule as they execute, so the
/// list is topologically ordered by construction; backward() replays it in
/// reverse. Single-threaded.
class Tape {
 public:
  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  /// Seeds d(root)/d(root) = 1 and accumulates gradients onto every
  /// requires_grad leaf. Root must be a scalar recorded on this tape.
  void backward(const Tensor& root);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// Tape-aware ops. Each result requires grad iff any input does, and a
// backward rule is recorded only in that case. Loops run in ascending index
// order throughout (forward and backward) so runs are bit-reproducible.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor exp(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

/// b (length N) added to every row of a (MxN).
Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& b);
/// Row m of a scaled by coeffs[m]; coefficients are constants.
Tensor scale_rows(Tape& tape, const Tensor& a, const std::vector<double>& coeffs);
/// Unit-normalizes a 1-d tensor, or each row of a 2-d tensor.
Tensor l2_normalize(Tape& tape, const Tensor& a);
/// Stable softmax of logits/tau over a 1-d tensor or each row of a 2-d one.
Tensor softmax_with_temperature(Tape& tape, const Tensor& a, double tau);
/// Copies rows idx[0..k) of a into a fresh [k x cols] tensor.
Tensor gather_rows(Tape& tape, const Tensor& a, const std::vector<std::size_t>& idx);
/// out[m] = a[m, cols[m]].
Tensor pick_per_row(Tape& tape, const Tensor& a, const std::vector<std::size_t>& cols);
Tensor reshape(Tape& tape, const Tensor& a, Shape target);

/// 3x3 same-padding convolution, x: [B,C,H,W], w: [O,C,3,3], bias: [O].
Tensor conv2d_3x3(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);
/// 2x2 average pooling with stride 2; H and W must be even.
Tensor avg_pool2(Tape& tape, const Tensor& x);

}  // namespace eir
