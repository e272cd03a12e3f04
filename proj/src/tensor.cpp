#include "eir/tensor.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "eir/error.hpp"

namespace eir {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size())
    throw_dimension("tensor: shape " + shape_str(shape) + " does not match data length " +
                    std::to_string(data.size()));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

std::size_t Tensor::rows() const {
  return impl_->shape.size() >= 2 ? impl_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  const Shape& s = impl_->shape;
  if (s.size() >= 2) {
    std::size_t c = 1;
    for (std::size_t i = 1; i < s.size(); ++i) c *= s[i];
    return c;
  }
  return s.empty() ? 1 : s[0];
}

double Tensor::item() const {
  if (size() != 1) throw_dimension("item: tensor has " + std::to_string(size()) + " elements");
  return impl_->data[0];
}

std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1)
    throw_dimension("backward: root must be a scalar tensor");
  if (!root.requires_grad())
    throw_dimension("backward: root is not on the tape (requires_grad is false)");
  root.impl()->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace {

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a, b))
    throw_dimension(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
}

bool track(const Tensor& a) { return a.requires_grad(); }
bool track(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw_dimension("matmul: expects 2-d tensors, got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw_dimension("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n}, track(a, b));
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * n + j];
      po[i * n + j] = acc;
    }
  if (out.requires_grad()) {
    tape.record([a, b, out, m, n, k]() mutable {
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      if (a.requires_grad()) {
        std::vector<double>& ga = a.grad();
        const double* pb = b.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb[t * n + j];
            ga[i * k + t] += acc;
          }
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = b.grad();
        const double* pa = a.data();
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += pa[i * k + t] * g[i * n + j];
            gb[t * n + j] += acc;
          }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) throw_dimension("transpose: expects a 2-d tensor");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m}, track(a));
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  if (out.requires_grad()) {
    tape.record([a, out, m, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), track(a, b));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  if (out.requires_grad()) {
    tape.record([a, b, out, n]() mutable {
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      if (a.requires_grad()) {
        std::vector<double>& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape(), track(a, b));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
  if (out.requires_grad()) {
    tape.record([a, b, out, n]() mutable {
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      if (a.requires_grad()) {
        std::vector<double>& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), track(a, b));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  if (out.requires_grad()) {
    tape.record([a, b, out, n]() mutable {
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      if (a.requires_grad()) {
        std::vector<double>& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape(), track(a));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
  if (out.requires_grad()) {
    tape.record([a, out, c, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor exp(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), track(a));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
  if (out.requires_grad()) {
    tape.record([a, out, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * out[i];
    });
  }
  return out;
}

Tensor log(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), track(a));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(a[i] > 0.0))
      throw_domain("log: non-positive input " + std::to_string(a[i]) + " at element " +
                   std::to_string(i));
    out[i] = std::log(a[i]);
  }
  if (out.requires_grad()) {
    tape.record([a, out, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / a[i];
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), track(a));
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  if (out.requires_grad()) {
    tape.record([a, out, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < n; ++i)
        if (a[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  const std::size_t n = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  Tensor out = Tensor::scalar(acc, track(a));
  if (out.requires_grad()) {
    tape.record([a, out, n]() mutable {
      std::vector<double>& ga = a.grad();
      if (out.grad_ref().empty()) return;
      const double g = out.grad_ref()[0];
      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  const std::size_t n = a.size();
  if (n == 0) throw_dimension("mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(n), track(a));
  if (out.requires_grad()) {
    tape.record([a, out, n]() mutable {
      std::vector<double>& ga = a.grad();
      if (out.grad_ref().empty()) return;
      const double q = out.grad_ref()[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) ga[i] += q;
    });
  }
  return out;
}

Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.shape()[0])
    throw_dimension("add_rowvec: expects [MxN] and [N], got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros(a.shape(), track(a, b));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + b[j];
  if (out.requires_grad()) {
    tape.record([a, b, out, m, n]() mutable {
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      if (a.requires_grad()) {
        std::vector<double>& ga = a.grad();
        for (std::size_t i = 0; i < m * n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        std::vector<double>& gb = b.grad();
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += g[i * n + j];
          gb[j] += acc;
        }
      }
    });
  }
  return out;
}

Tensor scale_rows(Tape& tape, const Tensor& a, const std::vector<double>& coeffs) {
  if (a.rank() != 2 || a.shape()[0] != coeffs.size())
    throw_dimension("scale_rows: row count " + std::to_string(a.rows()) +
                    " does not match coefficient count " + std::to_string(coeffs.size()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros(a.shape(), track(a));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] * coeffs[i];
  if (out.requires_grad()) {
    tape.record([a, out, coeffs, m, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * coeffs[i];
    });
  }
  return out;
}

namespace {
constexpr double kNormEps = 1e-12;
}

Tensor l2_normalize(Tape& tape, const Tensor& a) {
  if (a.rank() > 2) throw_dimension("l2_normalize: expects a 1-d or 2-d tensor");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(a.shape(), track(a));
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += a[i * n + j] * a[i * n + j];
    const double norm = std::sqrt(ss);
    if (!(norm > kNormEps))
      throw_numeric("l2_normalize: degenerate norm " + std::to_string(norm) + " in row " +
                    std::to_string(i));
    norms[i] = norm;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] / norm;
  }
  if (out.requires_grad()) {
    // Projection Jacobian: dx = (g - y * <y, g>) / ||x||.
    tape.record([a, out, norms = std::move(norms), m, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += out[i * n + j] * g[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          ga[i * n + j] += (g[i * n + j] - out[i * n + j] * dot) / norms[i];
      }
    });
  }
  return out;
}

Tensor softmax_with_temperature(Tape& tape, const Tensor& a, double tau) {
  if (!(tau > 0.0)) throw_parameter("softmax: tau must be positive, got " + std::to_string(tau));
  if (a.rank() > 2) throw_dimension("softmax: expects a 1-d or 2-d tensor");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(a.shape(), track(a));
  for (std::size_t i = 0; i < m; ++i) {
    double mx = a[i * n];
    for (std::size_t j = 1; j < n; ++j)
      if (a[i * n + j] > mx) mx = a[i * n + j];
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp((a[i * n + j] - mx) / tau);
      out[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  if (out.requires_grad()) {
    tape.record([a, out, tau, m, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * out[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          ga[i * n + j] += out[i * n + j] * (g[i * n + j] - dot) / tau;
      }
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& a, const std::vector<std::size_t>& idx) {
  if (a.rank() != 2) throw_dimension("gather_rows: expects a 2-d tensor");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  for (std::size_t r : idx)
    if (r >= m) throw_index("gather_rows: index " + std::to_string(r) + " out of range [0, " +
                            std::to_string(m) + ")");
  Tensor out = Tensor::zeros({idx.size(), n}, track(a));
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = a[idx[r] * n + j];
  if (out.requires_grad()) {
    tape.record([a, out, idx, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += g[r * n + j];
    });
  }
  return out;
}

Tensor pick_per_row(Tape& tape, const Tensor& a, const std::vector<std::size_t>& cols) {
  if (a.rank() != 2 || a.shape()[0] != cols.size())
    throw_dimension("pick_per_row: need one column per row");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  for (std::size_t c : cols)
    if (c >= n) throw_index("pick_per_row: column " + std::to_string(c) + " out of range");
  Tensor out = Tensor::zeros({m}, track(a));
  for (std::size_t i = 0; i < m; ++i) out[i] = a[i * n + cols[i]];
  if (out.requires_grad()) {
    tape.record([a, out, cols, n]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < cols.size(); ++i) ga[i * n + cols[i]] += g[i];
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape target) {
  if (shape_size(target) != a.size())
    throw_dimension("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(target));
  Tensor out(std::move(target), a.values(), track(a));
  if (out.requires_grad()) {
    tape.record([a, out]() mutable {
      std::vector<double>& ga = a.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor conv2d_3x3(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 4 || w.rank() != 4 || w.shape()[2] != 3 || w.shape()[3] != 3)
    throw_dimension("conv2d_3x3: expects x [B,C,H,W] and w [O,C,3,3]");
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t O = w.shape()[0];
  if (w.shape()[1] != C) throw_dimension("conv2d_3x3: channel mismatch");
  if (bias.size() != O) throw_dimension("conv2d_3x3: bias size mismatch");
  Tensor out = Tensor::zeros({B, O, H, W}, track(x, w) || bias.requires_grad());
  auto xat = [&](std::size_t b, std::size_t c, long i, long j) -> double {
    if (i < 0 || j < 0 || i >= static_cast<long>(H) || j >= static_cast<long>(W)) return 0.0;
    return x[((b * C + c) * H + i) * W + j];
  };
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t di = 0; di < 3; ++di)
              for (std::size_t dj = 0; dj < 3; ++dj)
                acc += xat(b, c, static_cast<long>(i + di) - 1, static_cast<long>(j + dj) - 1) *
                       w[((o * C + c) * 3 + di) * 3 + dj];
          out[((b * O + o) * H + i) * W + j] = acc + bias[o];
        }
  if (out.requires_grad()) {
    tape.record([x, w, bias, out, B, C, H, W, O]() mutable {
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      auto gout = [&](std::size_t b, std::size_t o, std::size_t i, std::size_t j) {
        return g[((b * O + o) * H + i) * W + j];
      };
      if (x.requires_grad()) {
        std::vector<double>& gx = x.grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H; ++i)
              for (std::size_t j = 0; j < W; ++j) {
                double acc = 0.0;
                for (std::size_t o = 0; o < O; ++o)
                  for (std::size_t di = 0; di < 3; ++di)
                    for (std::size_t dj = 0; dj < 3; ++dj) {
                      const long oi = static_cast<long>(i) + 1 - static_cast<long>(di);
                      const long oj = static_cast<long>(j) + 1 - static_cast<long>(dj);
                      if (oi < 0 || oj < 0 || oi >= static_cast<long>(H) ||
                          oj >= static_cast<long>(W))
                        continue;
                      acc += gout(b, o, oi, oj) * w[((o * C + c) * 3 + di) * 3 + dj];
                    }
                gx[((b * C + c) * H + i) * W + j] += acc;
              }
      }
      if (w.requires_grad()) {
        std::vector<double>& gw = w.grad();
        auto xat = [&](std::size_t b, std::size_t c, long i, long j) -> double {
          if (i < 0 || j < 0 || i >= static_cast<long>(H) || j >= static_cast<long>(W)) return 0.0;
          return x[((b * C + c) * H + i) * W + j];
        };
        for (std::size_t o = 0; o < O; ++o)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t di = 0; di < 3; ++di)
              for (std::size_t dj = 0; dj < 3; ++dj) {
                double acc = 0.0;
                for (std::size_t b = 0; b < B; ++b)
                  for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                      acc += gout(b, o, i, j) * xat(b, c, static_cast<long>(i + di) - 1,
                                                    static_cast<long>(j + dj) - 1);
                gw[((o * C + c) * 3 + di) * 3 + dj] += acc;
              }
      }
      if (bias.requires_grad()) {
        std::vector<double>& gb = bias.grad();
        for (std::size_t o = 0; o < O; ++o) {
          double acc = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < H; ++i)
              for (std::size_t j = 0; j < W; ++j) acc += gout(b, o, i, j);
          gb[o] += acc;
        }
      }
    });
  }
  return out;
}

Tensor avg_pool2(Tape& tape, const Tensor& x) {
  if (x.rank() != 4) throw_dimension("avg_pool2: expects [B,C,H,W]");
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H % 2 || W % 2) throw_dimension("avg_pool2: H and W must be even");
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out = Tensor::zeros({B, C, Ho, Wo}, track(x));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          const std::size_t base = (b * C + c) * H;
          double acc = x[(base + 2 * i) * W + 2 * j] + x[(base + 2 * i) * W + 2 * j + 1] +
                       x[(base + 2 * i + 1) * W + 2 * j] + x[(base + 2 * i + 1) * W + 2 * j + 1];
          out[((b * C + c) * Ho + i) * Wo + j] = acc * 0.25;
        }
  if (out.requires_grad()) {
    tape.record([x, out, B, C, H, W, Ho, Wo]() mutable {
      std::vector<double>& gx = x.grad();
      const std::vector<double>& g = out.grad_ref();
      if (g.empty()) return;  // this output never fed the loss
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
              const double q = g[((b * C + c) * Ho + i) * Wo + j] * 0.25;
              const std::size_t base = (b * C + c) * H;
              gx[(base + 2 * i) * W + 2 * j] += q;
              gx[(base + 2 * i) * W + 2 * j + 1] += q;
              gx[(base + 2 * i + 1) * W + 2 * j] += q;
              gx[(base + 2 * i + 1) * W + 2 * j + 1] += q;
            }
    });
  }
  return out;
}

}  // namespace eir
