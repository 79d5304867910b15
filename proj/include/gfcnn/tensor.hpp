#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "gfcnn/common.hpp"
#include "gfcnn/kernels.hpp"
#include "gfcnn/rng.hpp"

namespace gfcnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

// Extents must be >= 1, except that a rank-1 tensor may be empty (the
// degenerate operand of concat).
inline bool shape_valid(const Shape& s) {
  if (s.empty()) return false;
  if (s.size() == 1) return true;
  return std::all_of(s.begin(), s.end(), [](std::size_t e) { return e >= 1; });
}

template <class T>
struct TensorImpl {
  Shape shape{0};
  std::vector<T> data;
  std::vector<T> grad;  // empty until requested or reached by backward
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // nonzero once an op recorded this tensor
};

// Shared handle to a dense row-major tensor. Data is treated as immutable
// after construction except for gradient accumulation (and the in-place
// parameter updates of the optimizer, which owns its tensors).
template <class T>
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorImpl<T>>()) {}

  Tensor(Shape shape, std::vector<T> data)
      : impl_(std::make_shared<TensorImpl<T>>()) {
    if (!shape_valid(shape))
      fail(cat("tensor: invalid shape ", shape_str(shape)));
    if (shape_numel(shape) != data.size())
      fail(cat("tensor: shape ", shape_str(shape), " wants ",
               shape_numel(shape), " elements, got ", data.size()));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor zeros(const Shape& s) {
    return Tensor(s, std::vector<T>(shape_numel(s), T(0)));
  }
  static Tensor full(const Shape& s, T v) {
    return Tensor(s, std::vector<T>(shape_numel(s), v));
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }
  static Tensor from_vector(std::vector<T> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::span<T> data() const { return {impl_->data.data(), impl_->data.size()}; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) const {
    impl_->requires_grad = rg;
    if (rg) ensure_grad();
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
  void ensure_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }
  void zero_grad() const {
    if (impl_->grad.empty() && impl_->requires_grad) ensure_grad();
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) fail(cat("item: not a scalar, shape ", shape_str(shape())));
    return impl_->data[0];
  }

  Tensor clone() const { return Tensor(impl_->shape, impl_->data); }

  std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// Ordered record of one forward pass. Each primitive pushes its adjoint;
// backward() replays them once, in reverse, then drops the records so the
// tape can be reused (or destroyed) with bounded memory.
template <class T>
class Tape {
 public:
  Tape() : id_(++counter()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  void record(const Tensor<T>& out, std::function<void()> adjoint) {
    out.impl()->tape_id = id_;
    nodes_.push_back(std::move(adjoint));
  }

  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
      fail(cat("backward: loss must be scalar, got shape ",
               shape_str(loss.shape())));
    if (loss.impl()->tape_id != id_)
      fail("backward: loss tensor is detached from this tape");
    loss.ensure_grad();
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

 private:
  static std::atomic<std::uint64_t>& counter() {
    static std::atomic<std::uint64_t> c{0};
    return c;
  }
  std::uint64_t id_;
  std::vector<std::function<void()>> nodes_;
};

namespace detail {
template <class T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail(cat(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
             shape_str(b.shape())));
}
}  // namespace detail

// ---- elementwise primitives ------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  detail::check_same_shape("add", a, b);
  std::vector<T> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (tape)
    tape->record(y, [a, b, y] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      b.ensure_grad();
      auto g = y.grad();
      auto ga = a.grad(), gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  return y;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (tape)
    tape->record(y, [a, b, y] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      b.ensure_grad();
      auto g = y.grad();
      auto ga = a.grad(), gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
    });
  return y;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  detail::check_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (tape)
    tape->record(y, [a, b, y] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      b.ensure_grad();
      auto g = y.grad();
      auto ad2 = a.data(), bd2 = b.data();
      auto ga = a.grad(), gb = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * bd2[i];
        gb[i] += g[i] * ad2[i];
      }
    });
  return y;
}

// scalar-with-tensor variants are explicit; there is no implicit broadcasting
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s, Tape<T>* tape = nullptr) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * s;
  Tensor<T> y(a.shape(), std::move(out));
  if (tape)
    tape->record(y, [a, y, s] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      auto g = y.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  return y;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s, Tape<T>* tape = nullptr) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + s;
  Tensor<T> y(a.shape(), std::move(out));
  if (tape)
    tape->record(y, [a, y] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      auto g = y.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  return y;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a, Tape<T>* tape = nullptr) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > T(0) ? ad[i] : T(0);
  Tensor<T> y(a.shape(), std::move(out));
  if (tape)
    tape->record(y, [a, y] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      auto g = y.grad();
      auto ad2 = a.data();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (ad2[i] > T(0)) ga[i] += g[i];
    });
  return y;
}

// ---- structural primitives -------------------------------------------------

template <class T>
Tensor<T> flatten(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  Tensor<T> y(Shape{x.size()},
              std::vector<T>(x.data().begin(), x.data().end()));
  if (tape)
    tape->record(y, [x, y] {
      if (!y.has_grad()) return;
      x.ensure_grad();
      auto g = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  return y;
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  if (a.rank() != 1 || b.rank() != 1)
    fail(cat("concat: expects rank-1 operands, got ", shape_str(a.shape()),
             " and ", shape_str(b.shape())));
  std::vector<T> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const Shape out_shape{out.size()};
  Tensor<T> y(out_shape, std::move(out));
  if (tape)
    tape->record(y, [a, b, y] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      b.ensure_grad();
      auto g = y.grad();
      auto ga = a.grad(), gb = b.grad();
      const std::size_t na = ga.size();
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    });
  return y;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);
  if (tape)
    tape->record(y, [x, y] {
      if (!y.has_grad()) return;
      x.ensure_grad();
      const T g = y.grad()[0];
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  return y;
}

// ---- linear algebra primitives ----------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  if (a.rank() != 2 || b.rank() != 2)
    fail(cat("matmul: expects rank-2 operands, got ", shape_str(a.shape()),
             " and ", shape_str(b.shape())));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k)
    fail(cat("matmul: inner extents disagree, ", shape_str(a.shape()), " x ",
             shape_str(b.shape())));
  Tensor<T> y = Tensor<T>::zeros({m, n});
  kernels::matmul(a.data().data(), b.data().data(), y.data().data(), m, k, n);
  if (tape)
    tape->record(y, [a, b, y, m, k, n] {
      if (!y.has_grad()) return;
      a.ensure_grad();
      b.ensure_grad();
      auto g = y.grad();
      auto ad = a.data(), bd = b.data();
      auto ga = a.grad(), gb = b.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const T gy = g[i * n + j];
          if (gy == T(0)) continue;
          for (std::size_t l = 0; l < k; ++l) {
            ga[i * k + l] += gy * bd[l * n + j];
            gb[l * n + j] += ad[i * k + l] * gy;
          }
        }
    });
  return y;
}

// y = W x + b with W stored output-major (m_out x m_in), x rank-1
template <class T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weights,
                 const Tensor<T>& bias, Tape<T>* tape = nullptr) {
  if (x.rank() != 1)
    fail(cat("affine: input must be rank-1, got ", shape_str(x.shape())));
  if (weights.rank() != 2)
    fail(cat("affine: weights must be rank-2, got ", shape_str(weights.shape())));
  const std::size_t m_out = weights.shape()[0], m_in = weights.shape()[1];
  if (x.size() != m_in)
    fail(cat("affine: input length ", x.size(),
             " does not match weight fan-in ", m_in));
  if (bias.rank() != 1 || bias.size() != m_out)
    fail(cat("affine: bias shape ", shape_str(bias.shape()),
             " does not match fan-out ", m_out));
  Tensor<T> y = Tensor<T>::zeros({m_out});
  kernels::affine_forward(x.data().data(), weights.data().data(),
                          bias.data().data(), m_in, m_out, y.data().data());
  if (tape)
    tape->record(y, [x, weights, bias, y, m_in, m_out] {
      if (!y.has_grad()) return;
      x.ensure_grad();
      weights.ensure_grad();
      bias.ensure_grad();
      kernels::affine_backward(x.data().data(), weights.data().data(),
                               y.grad().data(), m_in, m_out, x.grad().data(),
                               weights.grad().data(), bias.grad().data());
    });
  return y;
}

// ---- spatial primitives ------------------------------------------------------

// x: (cin, h, w); k: (cout, cin, kh, kw); bias: (cout)
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias, Tape<T>* tape = nullptr) {
  if (x.rank() != 3)
    fail(cat("conv2d: input must be rank-3 (channels, h, w), got ",
             shape_str(x.shape())));
  if (kernel.rank() != 4)
    fail(cat("conv2d: kernel must be rank-4, got ", shape_str(kernel.shape())));
  const std::size_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t cout = kernel.shape()[0], kh = kernel.shape()[2],
                    kw = kernel.shape()[3];
  if (kernel.shape()[1] != cin)
    fail(cat("conv2d: kernel expects ", kernel.shape()[1],
             " input channels, input has ", cin));
  if (h < kh || w < kw)
    fail(cat("conv2d: input ", shape_str(x.shape()), " smaller than kernel ",
             kh, "x", kw));
  if (bias.rank() != 1 || bias.size() != cout)
    fail(cat("conv2d: bias shape ", shape_str(bias.shape()),
             " does not match ", cout, " output channels"));
  Tensor<T> y = Tensor<T>::zeros({cout, h - kh + 1, w - kw + 1});
  kernels::conv2d_forward(x.data().data(), cin, h, w, kernel.data().data(),
                          bias.data().data(), cout, kh, kw, y.data().data());
  if (tape)
    tape->record(y, [x, kernel, bias, y, cin, h, w, cout, kh, kw] {
      if (!y.has_grad()) return;
      x.ensure_grad();
      kernel.ensure_grad();
      bias.ensure_grad();
      kernels::conv2d_backward_input(y.grad().data(), kernel.data().data(),
                                     cin, h, w, cout, kh, kw, x.grad().data());
      kernels::conv2d_backward_params(x.data().data(), y.grad().data(), cin, h,
                                      w, cout, kh, kw, kernel.grad().data(),
                                      bias.grad().data());
    });
  return y;
}

// Non-overlapping max pooling; gradient goes to the first maximal element of
// each window in row-major order.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t pool_rows,
                    std::size_t pool_cols, Tape<T>* tape = nullptr) {
  if (x.rank() != 3)
    fail(cat("maxpool2d: input must be rank-3, got ", shape_str(x.shape())));
  if (pool_rows < 1 || pool_cols < 1)
    fail("maxpool2d: window extents must be >= 1");
  const std::size_t ch = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (pool_rows > h || pool_cols > w)
    fail(cat("maxpool2d: window ", pool_rows, "x", pool_cols,
             " larger than input ", shape_str(x.shape())));
  Tensor<T> y = Tensor<T>::zeros({ch, h / pool_rows, w / pool_cols});
  std::vector<std::uint32_t> argmax(y.size());
  kernels::maxpool_forward(x.data().data(), ch, h, w, pool_rows, pool_cols,
                           y.data().data(), argmax.data());
  if (tape)
    tape->record(y, [x, y, argmax = std::move(argmax), ch, h, w, pool_rows,
                     pool_cols] {
      if (!y.has_grad()) return;
      x.ensure_grad();
      kernels::maxpool_backward(y.grad().data(), argmax.data(), ch, h, w,
                                pool_rows, pool_cols, x.grad().data());
    });
  return y;
}

// ---- loss --------------------------------------------------------------------

template <class T>
struct LossOut {
  Tensor<T> loss;   // scalar, on the tape
  Tensor<T> probs;  // detached softmax probabilities
};

// Numerically stable softmax + cross-entropy against a single class index.
// Internal accumulation runs in double regardless of T.
template <class T>
LossOut<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label,
                                 Tape<T>* tape = nullptr) {
  if (logits.rank() != 1 || logits.size() == 0)
    fail(cat("softmax_cross_entropy: logits must be a nonempty rank-1 tensor, got ",
             shape_str(logits.shape())));
  const std::size_t c = logits.size();
  if (label >= c)
    fail(cat("softmax_cross_entropy: label ", label, " out of range for ", c,
             " classes"));
  auto ld = logits.data();
  double mx = static_cast<double>(ld[0]);
  for (std::size_t i = 1; i < c; ++i)
    mx = std::max(mx, static_cast<double>(ld[i]));
  std::vector<double> e(c);
  double denom = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    e[i] = std::exp(static_cast<double>(ld[i]) - mx);
    denom += e[i];
  }
  std::vector<T> probs(c);
  for (std::size_t i = 0; i < c; ++i) {
    e[i] /= denom;
    probs[i] = static_cast<T>(e[i]);
  }
  const double loss_v = -(static_cast<double>(ld[label]) - mx - std::log(denom));
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(loss_v));
  Tensor<T> probs_t = Tensor<T>::from_vector(std::move(probs));
  if (tape)
    tape->record(loss, [logits, loss, p = std::move(e), label] {
      if (!loss.has_grad()) return;
      logits.ensure_grad();
      const T g = loss.grad()[0];
      auto gl = logits.grad();
      for (std::size_t i = 0; i < gl.size(); ++i)
        gl[i] += g * static_cast<T>(p[i] - (i == label ? 1.0 : 0.0));
    });
  return {loss, probs_t};
}

// Softmax without the loss, for inference paths.
template <class T>
std::vector<double> softmax_probs(const Tensor<T>& logits) {
  if (logits.rank() != 1 || logits.size() == 0)
    fail("softmax_probs: logits must be a nonempty rank-1 tensor");
  auto ld = logits.data();
  double mx = static_cast<double>(ld[0]);
  for (std::size_t i = 1; i < ld.size(); ++i)
    mx = std::max(mx, static_cast<double>(ld[i]));
  std::vector<double> p(ld.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < ld.size(); ++i) {
    p[i] = std::exp(static_cast<double>(ld[i]) - mx);
    denom += p[i];
  }
  for (auto& v : p) v /= denom;
  return p;
}

// Inverted-dropout mask: zero with probability rate, survivors scaled by
// 1/(1-rate). Applied with mul(), which also routes the gradient.
template <class T>
Tensor<T> make_dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    fail(cat("dropout: rate must lie in [0,1), got ", rate));
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(shape_numel(shape));
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep;
  return Tensor<T>(shape, std::move(mask));
}

}  // namespace gfcnn
