#pragma once

// Dense row-major float64 tensors with a reverse-mode tape.
//
// Ops record onto the thread's active Tape (see TapeScope) whenever at least
// one input requires a gradient. With no active tape every op is a plain
// forward computation, which is how inference paths run.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "imc/rng.hpp"

namespace imc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const Tape* tape = nullptr;  // tape holding the producing node, if any

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // 2-D view: all leading dims folded into rows, last dim is cols.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  // Deep copy that is detached from any tape and does not require grad.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Records operations in creation order. Confined to one thread.
class Tape {
 public:
  using ImplPtr = std::shared_ptr<detail::TensorImpl>;
  struct Node {
    const char* op;
    std::vector<ImplPtr> inputs;
    ImplPtr output;
    std::function<void()> backward;
  };

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  void clear();
  void record(Node node);

  // Runs every node once in reverse creation order, then clears the tape.
  void run_backward(const Tensor& loss);

  static Tape* current() noexcept;

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Populates grads of every requires_grad leaf reachable from `loss`, which
// must be a scalar produced on the active tape. Clears the tape afterwards.
void backward(const Tensor& loss);

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// x[n,in] * w[out,in]^T + bias[out]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Elementwise with 2-D broadcasting of `b` (rows 1 or equal, cols 1 or equal).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
// axis is -1 (last) or 0 for 2-D inputs.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_squares(const Tensor& x);

// Per-row normalization over the last dim with learned scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// softmax(q k^T / sqrt(d_k)) v for one sequence.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);
// Same, applied independently to `groups` equal row blocks of q, k and v.
Tensor grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t groups);

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// [r,c] -> [r*times,c]; row i appears `times` times consecutively.
Tensor repeat_rows(const Tensor& x, std::size_t times);
// [r,c] -> [r*times,c]; the whole block is stacked `times` times.
Tensor tile_rows(const Tensor& x, std::size_t times);

Tensor gaussian(Shape shape, Rng& rng);

// Round-to-nearest fake quantization with a straight-through gradient:
// identity where the code is inside [qmin, qmax], zero where it clips.
Tensor fake_quant(const Tensor& x, double scale, int zero_point, int qmin, int qmax);

}  // namespace imc
