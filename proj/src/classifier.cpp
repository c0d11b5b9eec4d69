#include "imc/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "imc/error.hpp"

namespace imc {

// ---- model -------------------------------------------------------------------

MlpModel MlpModel::init(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) fail(ErrorKind::Contract, "MlpModel: need at least input and output dims");
  MlpModel m;
  m.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    if (in == 0 || out == 0) fail(ErrorKind::Contract, "MlpModel: zero-width layer");
    if (in + 1 > 256 || out > 256)
      fail(ErrorKind::Contract, "MlpModel: layer " + std::to_string(l + 1) + " (" + std::to_string(in) + "->" +
                                    std::to_string(out) + ") does not fit a 256x256 tile with its bias row");
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = sd * rng.normal();
    m.layers.push_back({Tensor({out, in}, std::move(w), true), Tensor::zeros({out}, true)});
  }
  return m;
}

std::vector<Tensor> MlpModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<Tensor> MlpModel::weights() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) out.push_back(l.weight);
  return out;
}

MlpModel MlpModel::clone() const {
  MlpModel m;
  m.dims = dims;
  for (const auto& l : layers)
    m.layers.push_back({l.weight.detach().set_requires_grad(true), l.bias.detach().set_requires_grad(true)});
  return m;
}

// ---- quantizers ----------------------------------------------------------------

int QuantParams::qmin() const noexcept { return is_signed ? -((1 << (bit_width - 1)) - 1) : 0; }
int QuantParams::qmax() const noexcept { return is_signed ? (1 << (bit_width - 1)) - 1 : (1 << bit_width) - 1; }

int QuantParams::quantize(double x) const {
  const double code = std::round(x / scale) + zero_point;
  return static_cast<int>(std::clamp(code, static_cast<double>(qmin()), static_cast<double>(qmax())));
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) fail(ErrorKind::Data, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - f) + values[hi] * f;
}

QuantParams weight_qparams(std::span<const double> w) {
  double m = 0.0;
  for (double v : w) m = std::max(m, std::abs(v));
  if (!(m > 0.0) || !std::isfinite(m)) fail(ErrorKind::Calibration, "weight_qparams: degenerate scale (all-zero or non-finite weights)");
  return {m / 127.0, 0, 8, true};
}

QuantParams activation_qparams(std::span<const double> values, double lo_pct, double hi_pct) {
  std::vector<double> v(values.begin(), values.end());
  const double lo = std::min(percentile(v, lo_pct), 0.0);
  const double hi = std::max(percentile(std::move(v), hi_pct), 0.0);
  QuantParams q{1.0, 0, 8, false};
  if (hi > lo) q.scale = (hi - lo) / 255.0;
  q.zero_point = static_cast<int>(std::clamp(std::round(-lo / q.scale), 0.0, 255.0));
  return q;
}

QuantParams signed_input_qparams(std::span<const double> values, int bits, double lo_pct, double hi_pct) {
  std::vector<double> v(values.begin(), values.end());
  const double lo = percentile(v, lo_pct);
  const double m = std::max(std::abs(lo), std::abs(percentile(std::move(v), hi_pct)));
  QuantParams q{1.0, 0, bits, true};
  if (m > 0.0) q.scale = m / static_cast<double>(q.qmax());
  return q;
}

// ---- forward / loss -------------------------------------------------------------

namespace {

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Tensor rows_of(const Matrix& x, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size() * x.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(x.row(idx[r]).begin(), x.cols, out.begin() + r * x.cols);
  return Tensor({idx.size(), x.cols}, std::move(out));
}

Tensor whole(const Matrix& x) { return Tensor({x.rows, x.cols}, x.data); }

}  // namespace

Tensor forward(const MlpModel& model, const Tensor& x, QatState* qat) {
  Tensor h = x;
  double in_scale = 0.0;
  if (qat) {
    in_scale = qat->input_scale;
    h = fake_quant(h, in_scale, 0, -255, 255);
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Tensor w = layer.weight, b = layer.bias;
    if (qat) {
      const double w_scale = max_abs(w.data()) / 127.0;
      if (w_scale > 0.0) {
        w = fake_quant(w, w_scale, 0, -127, 127);
        b = fake_quant(b, w_scale * in_scale * 255.0, 0, -127, 127);
      }
    }
    h = linear(h, w, b);
    if (l + 1 == model.layers.size()) break;
    h = relu(h);
    if (qat) {
      double& hi = qat->hidden_hi.at(l);
      if (qat->update) {
        const double batch_hi = percentile({h.data().begin(), h.data().end()}, 99.9);
        hi = hi > 0.0 ? qat->momentum * hi + (1.0 - qat->momentum) * batch_hi : batch_hi;
      }
      in_scale = hi > 0.0 ? hi / 255.0 : 1.0;
      h = fake_quant(h, in_scale, 0, 0, 255);
    }
  }
  return h;
}

Tensor regularized_loss(const Tensor& logits, std::span<const int> labels, const std::vector<Tensor>& weights,
                        double lambda) {
  if (lambda < 0.0) fail(ErrorKind::Contract, "loss: lambda must be non-negative");
  Tensor total = cross_entropy(logits, labels);
  if (lambda == 0.0) return total;
  for (const auto& w : weights) total = add(total, scale(sum_squares(w), lambda));
  return total;
}

Tensor loss(const MlpModel& model, const Tensor& x, std::span<const int> labels, double lambda, QatState* qat) {
  if (labels.empty()) fail(ErrorKind::Data, "loss: empty batch");
  return regularized_loss(forward(model, x, qat), labels, model.weights(), lambda);
}

double weight_norm_sq(const MlpModel& model) {
  double s = 0.0;
  for (const auto& l : model.layers)
    for (double v : l.weight.data()) s += v * v;
  return s;
}

int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  const std::size_t c = logits.cols();
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = argmax(logits.data().subspan(r * c, c));
  return out;
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct EpochEval {
  double loss, acc;
};

EpochEval eval_set(const MlpModel& model, const LabeledSet& set, double lambda, QatState* qat) {
  if (set.y.empty()) return {0.0, 0.0};
  bool saved = false;
  if (qat) std::swap(saved, qat->update);
  const Tensor logits = forward(model, whole(set.x), qat);
  if (qat) std::swap(saved, qat->update);
  const double l = regularized_loss(logits, set.y, model.weights(), lambda).item();
  return {l, accuracy(argmax_rows(logits), set.y)};
}

void check_set(const LabeledSet& s, std::size_t in_dim, const char* what) {
  if (s.x.rows != s.y.size()) fail(ErrorKind::Dimension, std::string(what) + ": feature/label count mismatch");
  if (s.x.rows > 0 && s.x.cols != in_dim)
    fail(ErrorKind::Dimension, std::string(what) + ": expected " + std::to_string(in_dim) + " features");
}

}  // namespace

TrainResult train(const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& cfg,
                  const std::vector<std::size_t>& dims) {
  if (train_set.y.empty()) fail(ErrorKind::Data, "train: empty training set");
  if (cfg.lambda < 0.0) fail(ErrorKind::Contract, "train: lambda must be non-negative");
  if (cfg.batch_size == 0) fail(ErrorKind::Contract, "train: batch_size must be positive");
  check_set(train_set, dims.front(), "train");
  check_set(val_set, dims.front(), "val");
  for (int y : train_set.y)
    if (y < 0 || static_cast<std::size_t>(y) >= dims.back()) fail(ErrorKind::Index, "train: label out of range");

  const Rng root(cfg.seed);
  Rng init_rng = root.split(streams::kInit);
  MlpModel model = MlpModel::init(dims, init_rng);
  Adam opt(model.parameters(), cfg.adam);

  QatState qat;
  qat.input_scale = signed_input_qparams(train_set.x.data).scale;
  qat.hidden_hi.assign(dims.size() - 2, 0.0);
  const bool qat_phase_exists = cfg.qat_enabled && cfg.epochs > cfg.qat_warmup_epochs;

  TrainResult result;
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  const std::size_t n = train_set.y.size();
  std::vector<std::size_t> order(n);
  std::vector<int> batch_labels;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const bool use_qat = cfg.qat_enabled && epoch > cfg.qat_warmup_epochs;
    QatState* q = use_qat ? &qat : nullptr;

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.split(streams::kTrain).split(epoch);
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n - start));
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(train_set.y[i]);
      Tape tape;
      TapeScope scope(tape);
      double value = 0.0;
      try {
        if (q) q->update = true;
        Tensor l = loss(model, rows_of(train_set.x, idx), batch_labels, cfg.lambda, q);
        if (q) q->update = false;
        value = l.item();
        if (!std::isfinite(value)) fail(ErrorKind::Numeric, "non-finite loss");
        backward(l);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        fail(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      opt.step();
      opt.zero_grad();
    }

    const auto tr = eval_set(model, train_set, cfg.lambda, q);
    const auto va = eval_set(model, val_set, cfg.lambda, q);
    if (!std::isfinite(tr.loss))
      fail(ErrorKind::Divergence, "training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
    result.curves.train_loss.push_back(tr.loss);
    result.curves.train_acc.push_back(tr.acc);
    result.curves.val_loss.push_back(va.loss);
    result.curves.val_acc.push_back(va.acc);

    // Once fake quantization starts, only quantization-trained epochs compete.
    const bool eligible = !qat_phase_exists || use_qat;
    if (eligible && (va.acc > best_acc || (va.acc == best_acc && va.loss < best_loss))) {
      best_acc = va.acc;
      best_loss = va.loss;
      result.model = model.clone();
      result.best_epoch = epoch;
      result.qat = qat;
    }
  }
  if (result.best_epoch == 0) {
    result.model = model.clone();
    result.qat = qat;
  }
  return result;
}

std::vector<int> predict(const MlpModel& model, const Matrix& x) {
  if (x.rows == 0) return {};
  return argmax_rows(forward(model, whole(x)));
}

// ---- int8 export -------------------------------------------------------------------

QuantizedModel quantize(const MlpModel& model, const Matrix& calibration) {
  if (calibration.rows == 0) fail(ErrorKind::Data, "quantize: empty calibration batch");
  if (calibration.cols != model.dims.front()) fail(ErrorKind::Dimension, "quantize: calibration width mismatch");
  QuantizedModel q;
  Tensor h = whole(calibration);
  QuantParams in_q = signed_input_qparams(calibration.data);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    QuantizedLayer ql;
    ql.out = layer.weight.shape()[0];
    ql.in = layer.weight.shape()[1];
    ql.weight_q = weight_qparams(layer.weight.data());
    ql.input_q = in_q;
    ql.relu = l + 1 < model.layers.size();
    ql.weight.reserve(ql.in * ql.out);
    for (double w : layer.weight.data()) ql.weight.push_back(static_cast<std::int8_t>(ql.weight_q.quantize(w)));
    ql.bias_scale = ql.weight_q.scale * in_q.scale * 255.0;
    for (double b : layer.bias.data())
      ql.bias.push_back(static_cast<std::int8_t>(std::clamp(std::round(b / ql.bias_scale), -127.0, 127.0)));
    q.layers.push_back(std::move(ql));

    h = linear(h, layer.weight, layer.bias);
    if (l + 1 < model.layers.size()) {
      h = relu(h);
      in_q = activation_qparams(h.data());
    }
  }
  return q;
}

std::vector<int> quantize_features(const QuantizedModel& model, std::span<const double> features) {
  const auto& q = model.input_q();
  if (features.size() != model.layers.front().in) fail(ErrorKind::Dimension, "quantize_features: width mismatch");
  std::vector<int> codes(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) codes[i] = q.quantize(features[i]);
  return codes;
}

std::vector<double> int_forward(const QuantizedModel& model, std::span<const double> features, IntTrace* trace) {
  std::vector<int> codes = quantize_features(model, features);
  std::vector<double> real;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& ql = model.layers[l];
    std::vector<std::int64_t> acc(ql.out);
    for (std::size_t j = 0; j < ql.out; ++j) {
      std::int64_t s = 255 * std::int64_t{ql.bias[j]};
      const std::int8_t* w = ql.weight.data() + j * ql.in;
      for (std::size_t i = 0; i < ql.in; ++i) s += std::int64_t{w[i]} * (codes[i] - ql.input_q.zero_point);
      acc[j] = s;
    }
    real.assign(ql.out, 0.0);
    const double unit = ql.weight_q.scale * ql.input_q.scale;
    for (std::size_t j = 0; j < ql.out; ++j) real[j] = static_cast<double>(acc[j]) * unit;
    if (trace) {
      trace->codes.push_back(codes);
      trace->acc.push_back(acc);
      trace->real.push_back(real);
    }
    if (ql.relu) {
      const auto& next = model.layers.at(l + 1).input_q;
      codes.assign(ql.out, 0);
      for (std::size_t j = 0; j < ql.out; ++j) codes[j] = next.quantize(std::max(0.0, real[j]));
    }
  }
  return real;
}

std::vector<int> int_predict(const QuantizedModel& model, const Matrix& x) {
  std::vector<int> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = argmax(int_forward(model, x.row(r)));
  return out;
}

// ---- metrics -----------------------------------------------------------------------

Metrics evaluate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) fail(ErrorKind::Dimension, "evaluate: prediction/label count mismatch");
  if (truth.empty()) fail(ErrorKind::Data, "evaluate: empty split");
  Metrics m;
  m.n = truth.size();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumClasses || predicted[i] < 0 || predicted[i] >= kNumClasses)
      fail(ErrorKind::Index, "evaluate: class index out of range");
    ++m.confusion[truth[i]][predicted[i]];
    hit += truth[i] == predicted[i];
  }
  m.overall = static_cast<double>(hit) / static_cast<double>(m.n);
  for (int c = 0; c < kNumClasses; ++c) {
    std::size_t support = 0;
    for (auto v : m.confusion[c]) support += v;
    m.per_class[c] = support ? static_cast<double>(m.confusion[c][c]) / static_cast<double>(support) : 0.0;
  }
  return m;
}

void write_metrics_header(std::ostream& os) { os << "env,overall,healthy,heart_attack,liver_cancer\n"; }

void write_metrics_row(std::ostream& os, const std::string& env, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", env.c_str(), m.overall, m.per_class[0], m.per_class[1],
                m.per_class[2]);
  os << buf;
}

// ---- checkpoints --------------------------------------------------------------------

Checkpoint model_to_checkpoint(const MlpModel& model) {
  Checkpoint ck;
  ck.put_string("kind", "mlp");
  std::vector<std::int64_t> dims(model.dims.begin(), model.dims.end());
  ck.put_i64("dims", {dims.size()}, dims);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    ck.put("layer" + std::to_string(l) + ".weight", model.layers[l].weight);
    ck.put("layer" + std::to_string(l) + ".bias", model.layers[l].bias);
  }
  return ck;
}

MlpModel model_from_checkpoint(const Checkpoint& ck) {
  if (!ck.has("kind") || ck.string("kind") != "mlp") fail(ErrorKind::Data, "checkpoint is not an MLP model");
  MlpModel m;
  for (auto d : ck.i64("dims")) m.dims.push_back(static_cast<std::size_t>(d));
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    Tensor w = ck.tensor("layer" + std::to_string(l) + ".weight");
    Tensor b = ck.tensor("layer" + std::to_string(l) + ".bias");
    if (w.shape() != Shape{m.dims[l + 1], m.dims[l]} || b.numel() != m.dims[l + 1])
      fail(ErrorKind::Data, "mlp checkpoint: layer " + std::to_string(l) + " has the wrong shape");
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    m.layers.push_back({w, b});
  }
  return m;
}

void put_quantized(Checkpoint& ck, const QuantizedModel& q) {
  ck.put_int("q.layers", static_cast<std::int64_t>(q.layers.size()));
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    const auto& ql = q.layers[l];
    const std::string p = "q.layer" + std::to_string(l) + ".";
    ck.put_i8(p + "weight", {ql.out, ql.in}, ql.weight);
    ck.put_i8(p + "bias", {ql.out}, ql.bias);
    ck.put_scalar(p + "weight_scale", ql.weight_q.scale);
    ck.put_scalar(p + "bias_scale", ql.bias_scale);
    ck.put_scalar(p + "input_scale", ql.input_q.scale);
    const std::int64_t meta[4] = {ql.input_q.zero_point, ql.input_q.bit_width, ql.input_q.is_signed, ql.relu};
    ck.put_i64(p + "input_meta", {4}, meta);
  }
}

QuantizedModel quantized_from_checkpoint(const Checkpoint& ck) {
  QuantizedModel q;
  const auto count = ck.integer("q.layers");
  for (std::int64_t l = 0; l < count; ++l) {
    const std::string p = "q.layer" + std::to_string(l) + ".";
    QuantizedLayer ql;
    const auto& we = ck.entry(p + "weight");
    if (we.shape.size() != 2) fail(ErrorKind::Data, "quantized checkpoint: bad weight shape");
    ql.out = we.shape[0];
    ql.in = we.shape[1];
    ql.weight = ck.i8(p + "weight");
    ql.bias = ck.i8(p + "bias");
    ql.weight_q = {ck.scalar(p + "weight_scale"), 0, 8, true};
    ql.bias_scale = ck.scalar(p + "bias_scale");
    const auto meta = ck.i64(p + "input_meta");
    if (meta.size() != 4 || ql.bias.size() != ql.out) fail(ErrorKind::Data, "quantized checkpoint: bad layer metadata");
    ql.input_q = {ck.scalar(p + "input_scale"), static_cast<int>(meta[0]), static_cast<int>(meta[1]), meta[2] != 0};
    ql.relu = meta[3] != 0;
    q.layers.push_back(std::move(ql));
  }
  return q;
}

}  // namespace imc
