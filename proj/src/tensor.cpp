#include "imc/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "imc/error.hpp"

namespace imc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

thread_local Tape* g_current_tape = nullptr;

MapM view(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapM(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

std::size_t rows_of(const Shape& s) {
  if (s.size() <= 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}
std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (g_current_tape == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void record(Tensor& out, const char* op, std::vector<ImplPtr> inputs, std::function<void()> fn) {
  out.impl()->requires_grad = true;
  out.impl()->tape = g_current_tape;
  g_current_tape->record({op, std::move(inputs), out.impl(), std::move(fn)});
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) fail(ErrorKind::Contract, std::string(op) + ": undefined tensor");
}

// 2-D broadcast geometry of one operand against the output.
struct Bcast {
  std::size_t rows, cols;
  std::size_t index(std::size_t r, std::size_t c) const {
    return (rows == 1 ? 0 : r) * cols + (cols == 1 ? 0 : c);
  }
};

Bcast bcast_of(const Tensor& t) {
  if (t.dim() == 0) return {1, 1};
  if (t.dim() == 1) return {1, t.numel()};
  return {t.rows(), t.cols()};
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor make_result(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    fail(ErrorKind::Dimension, "tensor shape " + shape_str(shape) + " does not match " +
                                   std::to_string(data.size()) + " values");
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

std::size_t Tensor::rows() const { return rows_of(impl_->shape); }
std::size_t Tensor::cols() const { return cols_of(impl_->shape); }

double Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::Contract, "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

// ---- tape ------------------------------------------------------------------

void Tape::clear() { nodes_.clear(); }

void Tape::record(Node node) { nodes_.push_back(std::move(node)); }

Tape* Tape::current() noexcept { return g_current_tape; }

void Tape::run_backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail(ErrorKind::Contract, "backward() needs a scalar loss");
  if (loss.impl()->tape != this)
    fail(ErrorKind::Contract, "backward(): loss was not produced on this tape");
  loss.impl()->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output->grad.empty()) it->backward();
  }
  for (auto& node : nodes_) node.output->tape = nullptr;
  nodes_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::current();
  if (tape == nullptr) fail(ErrorKind::Contract, "backward() without an active tape");
  tape->run_backward(loss);
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0])
    fail(ErrorKind::Dimension,
         "matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  view(out, m, n).noalias() = view(a.impl()->data, m, k) * view(b.impl()->data, k, n);
  Tensor y = make_result({m, n}, std::move(out));
  if (wants_grad({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl(), yi = y.impl();
    record(y, "matmul", {ai, bi}, [ai, bi, yi, m, k, n] {
      auto dy = view(yi->grad, m, n);
      if (ai->requires_grad) view(ai->ensure_grad(), m, k).noalias() += dy * view(bi->data, k, n).transpose();
      if (bi->requires_grad) view(bi->ensure_grad(), k, n).noalias() += view(ai->data, m, k).transpose() * dy;
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  if (w.dim() != 2 || x.cols() != w.shape()[1])
    fail(ErrorKind::Dimension,
         "linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  const std::size_t n = x.rows(), in = x.cols(), outd = w.shape()[0];
  if (bias.defined() && bias.numel() != outd)
    fail(ErrorKind::Dimension, "linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(outd) + " outputs");
  std::vector<double> out(n * outd);
  auto ym = view(out, n, outd);
  ym.noalias() = view(x.impl()->data, n, in) * view(w.impl()->data, outd, in).transpose();
  if (bias.defined()) ym.rowwise() += view(bias.impl()->data, 1, outd).row(0);
  Shape shape = x.dim() <= 1 ? Shape{outd} : x.shape();
  if (x.dim() > 1) shape.back() = outd;
  Tensor y = make_result(std::move(shape), std::move(out));
  if (wants_grad({&x, &w, &bias})) {
    ImplPtr xi = x.impl(), wi = w.impl(), yi = y.impl();
    ImplPtr bi = bias.defined() ? bias.impl() : nullptr;
    std::vector<ImplPtr> inputs{xi, wi};
    if (bi) inputs.push_back(bi);
    record(y, "linear", std::move(inputs), [xi, wi, bi, yi, n, in, outd] {
      auto dy = view(yi->grad, n, outd);
      if (xi->requires_grad) view(xi->ensure_grad(), n, in).noalias() += dy * view(wi->data, outd, in);
      if (wi->requires_grad) view(wi->ensure_grad(), outd, in).noalias() += dy.transpose() * view(xi->data, n, in);
      if (bi && bi->requires_grad) {
        // Fixed row order: Eigen's vectorized column sums depend on buffer alignment.
        auto& g = bi->ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < outd; ++c) g[c] += dy(r, c);
      }
    });
  }
  return y;
}

// ---- elementwise ---------------------------------------------------------------

namespace {

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  require_defined(a, name);
  require_defined(b, name);
  const Bcast ga = bcast_of(a), gb = bcast_of(b);
  const std::size_t R = std::max(ga.rows, gb.rows), C = std::max(ga.cols, gb.cols);
  auto ok = [&](const Bcast& g) { return (g.rows == R || g.rows == 1) && (g.cols == C || g.cols == 1); };
  if (!ok(ga) || !ok(gb))
    fail(ErrorKind::Dimension,
         std::string(name) + ": cannot broadcast " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  Shape shape;
  if (a.numel() == R * C) shape = a.shape();
  else if (b.numel() == R * C) shape = b.shape();
  else shape = {R, C};

  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  std::vector<double> out(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const double x = ad[ga.index(r, c)], z = bd[gb.index(r, c)];
      out[r * C + c] = op == BinOp::Add ? x + z : op == BinOp::Sub ? x - z : x * z;
    }
  Tensor y = make_result(std::move(shape), std::move(out));
  if (wants_grad({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl(), yi = y.impl();
    record(y, name, {ai, bi}, [ai, bi, yi, ga, gb, R, C, op] {
      const auto& dy = yi->grad;
      if (ai->requires_grad) {
        auto& da = ai->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            const double g = dy[r * C + c];
            da[ga.index(r, c)] += op == BinOp::Mul ? g * bi->data[gb.index(r, c)] : g;
          }
      }
      if (bi->requires_grad) {
        auto& db = bi->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            const double g = dy[r * C + c];
            db[gb.index(r, c)] += op == BinOp::Mul ? g * ai->data[ga.index(r, c)] : op == BinOp::Sub ? -g : g;
          }
      }
    });
  }
  return y;
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  require_defined(x, name);
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  Tensor y = make_result(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, name, {xi}, [xi, yi, deriv] {
      auto& dx = xi->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += yi->grad[i] * deriv(xi->data[i]);
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor fake_quant(const Tensor& x, double scale_, int zero_point, int qmin, int qmax) {
  if (!(scale_ > 0.0)) fail(ErrorKind::Contract, "fake_quant: scale must be positive");
  require_defined(x, "fake_quant");
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  std::vector<char> pass(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double code = std::round(xd[i] / scale_) + zero_point;
    pass[i] = code >= qmin && code <= qmax;
    out[i] = (std::clamp(code, double(qmin), double(qmax)) - zero_point) * scale_;
  }
  Tensor y = make_result(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "fake_quant", {xi}, [xi, yi, pass = std::move(pass)] {
      auto& dx = xi->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (pass[i]) dx[i] += yi->grad[i];
    });
  }
  return y;
}

// ---- shape ops -------------------------------------------------------------------

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  if (x.dim() != 2) fail(ErrorKind::Dimension, "transpose needs a 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  view(out, c, r) = view(x.impl()->data, r, c).transpose();
  Tensor y = make_result({c, r}, std::move(out));
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "transpose", {xi}, [xi, yi, r, c] {
      view(xi->ensure_grad(), r, c) += view(yi->grad, c, r).transpose();
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel())
    fail(ErrorKind::Dimension, "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor y = make_result(std::move(shape), x.impl()->data);
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "reshape", {xi}, [xi, yi] {
      auto& dx = xi->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += yi->grad[i];
    });
  }
  return y;
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  require_defined(x, "repeat_rows");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * times * c);
  const auto& xd = x.impl()->data;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t t = 0; t < times; ++t)
      std::copy_n(xd.begin() + i * c, c, out.begin() + (i * times + t) * c);
  Tensor y = make_result({r * times, c}, std::move(out));
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "repeat_rows", {xi}, [xi, yi, r, c, times] {
      auto& dx = xi->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t t = 0; t < times; ++t)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += yi->grad[(i * times + t) * c + j];
    });
  }
  return y;
}

Tensor tile_rows(const Tensor& x, std::size_t times) {
  require_defined(x, "tile_rows");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out;
  out.reserve(r * c * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.data().begin(), x.data().end());
  Tensor y = make_result({r * times, c}, std::move(out));
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "tile_rows", {xi}, [xi, yi, times] {
      auto& dx = xi->ensure_grad();
      const std::size_t n = dx.size();
      for (std::size_t t = 0; t < times; ++t)
        for (std::size_t i = 0; i < n; ++i) dx[i] += yi->grad[t * n + i];
    });
  }
  return y;
}

// ---- reductions ---------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = make_result({}, {s});
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "sum", {xi}, [xi, yi] {
      auto& dx = xi->ensure_grad();
      for (double& d : dx) d += yi->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_squares(const Tensor& x) {
  require_defined(x, "sum_squares");
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  Tensor y = make_result({}, {s});
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "sum_squares", {xi}, [xi, yi] {
      auto& dx = xi->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * xi->data[i] * yi->grad[0];
    });
  }
  return y;
}

// ---- softmax family -----------------------------------------------------------------

namespace {

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in + r * cols;
    double* s = out + r * cols;
    double mx = x[0];
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::isfinite(x[c])) fail(ErrorKind::Numeric, "softmax: non-finite input");
      mx = std::max(mx, x[c]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (s[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) s[c] /= z;
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  if (x.numel() == 0 || x.cols() == 0) fail(ErrorKind::Contract, "softmax over an empty axis");
  if (axis == 0 && x.dim() == 2) return transpose(softmax(transpose(x), -1));
  if (axis != -1 && axis != static_cast<int>(x.dim()) - 1)
    fail(ErrorKind::Contract, "softmax: axis must be the last axis (or 0 for 2-D inputs)");
  const std::size_t R = x.rows(), C = x.cols();
  std::vector<double> out(R * C);
  softmax_rows(x.impl()->data.data(), out.data(), R, C);
  Tensor y = make_result(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    record(y, "softmax", {xi}, [xi, yi, R, C] {
      auto& dx = xi->ensure_grad();
      const auto& s = yi->data;
      const auto& dy = yi->grad;
      for (std::size_t r = 0; r < R; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += dy[r * C + c] * s[r * C + c];
        for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += s[r * C + c] * (dy[r * C + c] - dot);
      }
    });
  }
  return y;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) { return grouped_attention(q, k, v, 1); }

Tensor grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t groups) {
  require_defined(q, "attention");
  require_defined(k, "attention");
  require_defined(v, "attention");
  if (q.dim() != 2 || k.dim() != 2 || v.dim() != 2)
    fail(ErrorKind::Dimension, "attention expects 2-D q, k, v");
  const std::size_t dk = q.cols();
  if (dk == 0 || k.cols() != dk)
    fail(ErrorKind::Dimension,
         "attention: query " + shape_str(q.shape()) + " and key " + shape_str(k.shape()) + " disagree on d_k");
  if (k.rows() != v.rows())
    fail(ErrorKind::Dimension,
         "attention: key " + shape_str(k.shape()) + " and value " + shape_str(v.shape()) + " lengths differ");
  if (groups == 0 || q.rows() % groups || k.rows() % groups)
    fail(ErrorKind::Dimension, "attention: rows not divisible into " + std::to_string(groups) + " groups");
  const std::size_t sq = q.rows() / groups, sk = k.rows() / groups, dv = v.cols();
  if (sk == 0) fail(ErrorKind::Dimension, "attention: empty key sequence");
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));

  auto probs = std::make_shared<std::vector<double>>(groups * sq * sk);
  std::vector<double> out(groups * sq * dv);
  std::vector<double> scores(sq * sk);
  for (std::size_t g = 0; g < groups; ++g) {
    MapC qg(q.impl()->data.data() + g * sq * dk, sq, dk);
    MapC kg(k.impl()->data.data() + g * sk * dk, sk, dk);
    MapC vg(v.impl()->data.data() + g * sk * dv, sk, dv);
    view(scores, sq, sk).noalias() = (qg * kg.transpose()) * inv;
    double* p = probs->data() + g * sq * sk;
    softmax_rows(scores.data(), p, sq, sk);
    MapM(out.data() + g * sq * dv, sq, dv).noalias() = MapC(p, sq, sk) * vg;
  }
  Tensor y = make_result({groups * sq, dv}, std::move(out));
  if (wants_grad({&q, &k, &v})) {
    ImplPtr qi = q.impl(), ki = k.impl(), vi = v.impl(), yi = y.impl();
    record(y, "attention", {qi, ki, vi}, [=] {
      RowMat dp(sq, sk), ds(sq, sk);
      for (std::size_t g = 0; g < groups; ++g) {
        MapC p(probs->data() + g * sq * sk, sq, sk);
        MapC dy(yi->grad.data() + g * sq * dv, sq, dv);
        MapC qg(qi->data.data() + g * sq * dk, sq, dk);
        MapC kg(ki->data.data() + g * sk * dk, sk, dk);
        MapC vg(vi->data.data() + g * sk * dv, sk, dv);
        dp.noalias() = dy * vg.transpose();
        if (vi->requires_grad) MapM(vi->ensure_grad().data() + g * sk * dv, sk, dv).noalias() += p.transpose() * dy;
        for (std::size_t r = 0; r < sq; ++r) {
          double dot = 0.0;  // plain loop: a vectorized sum over a Map depends on its alignment
          for (std::size_t c = 0; c < sk; ++c) dot += dp(r, c) * p(r, c);
          ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
        }
        ds *= inv;
        if (qi->requires_grad) MapM(qi->ensure_grad().data() + g * sq * dk, sq, dk).noalias() += ds * kg;
        if (ki->requires_grad) MapM(ki->ensure_grad().data() + g * sk * dk, sk, dk).noalias() += ds.transpose() * qg;
      }
    });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_defined(logits, "cross_entropy");
  const std::size_t B = logits.rows(), C = logits.cols();
  if (labels.size() != B)
    fail(ErrorKind::Dimension, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                   std::to_string(B) + " rows");
  if (B == 0) fail(ErrorKind::Contract, "cross_entropy on an empty batch");
  auto probs = std::make_shared<std::vector<double>>(B * C);
  softmax_rows(logits.impl()->data.data(), probs->data(), B, C);
  const auto& z = logits.impl()->data;
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      fail(ErrorKind::Index, "cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
    double mx = z[b * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, z[b * C + c]);
    double se = 0.0;
    for (std::size_t c = 0; c < C; ++c) se += std::exp(z[b * C + c] - mx);
    loss += mx + std::log(se) - z[b * C + y];
  }
  Tensor out = make_result({}, {loss / static_cast<double>(B)});
  if (wants_grad({&logits})) {
    ImplPtr li = logits.impl(), yi = out.impl();
    std::vector<int> lab(labels.begin(), labels.end());
    record(out, "cross_entropy", {li}, [li, yi, probs, lab = std::move(lab), B, C] {
      auto& dl = li->ensure_grad();
      const double g = yi->grad[0] / static_cast<double>(B);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          dl[b * C + c] += g * ((*probs)[b * C + c] - (static_cast<int>(c) == lab[b] ? 1.0 : 0.0));
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t R = x.rows(), C = x.cols();
  if (gamma.numel() != C || beta.numel() != C)
    fail(ErrorKind::Dimension, "layer_norm: scale/shift must have " + std::to_string(C) + " entries");
  const auto& xd = x.impl()->data;
  auto xhat = std::make_shared<std::vector<double>>(R * C);
  auto inv_std = std::make_shared<std::vector<double>>(R);
  std::vector<double> out(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += xd[r * C + c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (xd[r * C + c] - mu) * (xd[r * C + c] - mu);
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (xd[r * C + c] - mu) * is;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = gamma.at(c) * h + beta.at(c);
    }
  }
  Tensor y = make_result(x.shape(), std::move(out));
  if (wants_grad({&x, &gamma, &beta})) {
    ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl();
    record(y, "layer_norm", {xi, gi, bi}, [=] {
      const auto& dy = yi->grad;
      if (gi->requires_grad || bi->requires_grad) {
        auto& dg = gi->ensure_grad();
        auto& db = bi->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            dg[c] += dy[r * C + c] * (*xhat)[r * C + c];
            db[c] += dy[r * C + c];
          }
      }
      if (xi->requires_grad) {
        auto& dx = xi->ensure_grad();
        const double n = static_cast<double>(C);
        for (std::size_t r = 0; r < R; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            const double dh = dy[r * C + c] * gi->data[c];
            s1 += dh;
            s2 += dh * (*xhat)[r * C + c];
          }
          for (std::size_t c = 0; c < C; ++c) {
            const double dh = dy[r * C + c] * gi->data[c];
            dx[r * C + c] += (*inv_std)[r] / n * (n * dh - s1 - (*xhat)[r * C + c] * s2);
          }
        }
      }
    });
  }
  return y;
}

Tensor gaussian(Shape shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  for (double& v : out) v = rng.normal();
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace imc
