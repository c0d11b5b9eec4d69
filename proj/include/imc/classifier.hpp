#pragma once

// Multi-layer perceptron classifier: L2-regularized training with optional
// quantization-aware training, int8 export and evaluation metrics.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "imc/checkpoint.hpp"
#include "imc/matrix.hpp"
#include "imc/optim.hpp"
#include "imc/spectra.hpp"
#include "imc/tensor.hpp"

namespace imc {

inline const std::vector<std::size_t> kDefaultMlpDims{128, 240, 96, 48, 3};

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

// ReLU follows every layer except the last.
struct MlpModel {
  std::vector<std::size_t> dims;
  std::vector<LinearLayer> layers;

  // He-normal weights, zero biases. Throws Contract if a layer would not fit
  // one 256x256 tile with its bias row.
  static MlpModel init(const std::vector<std::size_t>& dims, Rng& rng);
  std::vector<Tensor> parameters() const;
  std::vector<Tensor> weights() const;
  MlpModel clone() const;
};

// Per-tensor affine quantizer: real = (code - zero_point) * scale.
struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;
  int bit_width = 8;
  bool is_signed = false;

  int qmin() const noexcept;
  int qmax() const noexcept;
  int quantize(double x) const;
  double dequantize(int code) const noexcept { return (code - zero_point) * scale; }
};

// Symmetric signed int8: scale = max|w| / 127. All-zero input is a
// Calibration (degenerate scale) error.
QuantParams weight_qparams(std::span<const double> w);
// Unsigned 8-bit affine over [min(p_lo, 0), max(p_hi, 0)]; real 0.0 maps to
// the zero point exactly.
QuantParams activation_qparams(std::span<const double> values, double lo_pct = 0.1, double hi_pct = 99.9);
// Symmetric signed input quantizer with `bits` total bits (9 for the split
// first layer: codes in [-255, 255]).
QuantParams signed_input_qparams(std::span<const double> values, int bits = 9, double lo_pct = 0.1,
                                 double hi_pct = 99.9);

// Linear-interpolated percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

// Quantization-aware training state: the activation ranges used by the fake
// quantizers. Hidden ranges follow an EMA of the batch 99.9th percentile.
struct QatState {
  double input_scale = 0.0;
  std::vector<double> hidden_hi;  // one per hidden layer
  double momentum = 0.9;
  bool update = false;  // refresh hidden_hi from each forward batch
};

// Logits [n, classes]. With `qat`, weights, biases and activations pass
// through fake quantizers.
Tensor forward(const MlpModel& model, const Tensor& x, QatState* qat = nullptr);

// cross_entropy(logits, labels) + lambda * sum of squared weight entries.
Tensor regularized_loss(const Tensor& logits, std::span<const int> labels, const std::vector<Tensor>& weights,
                        double lambda);
Tensor loss(const MlpModel& model, const Tensor& x, std::span<const int> labels, double lambda,
            QatState* qat = nullptr);
double weight_norm_sq(const MlpModel& model);

struct TrainConfig {
  double lambda = 1e-4;
  std::size_t epochs = 80;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  bool qat_enabled = true;
  std::size_t qat_warmup_epochs = 20;  // float epochs before fake quantization starts
  std::uint64_t seed = 0;
};

struct TrainCurves {
  std::vector<double> train_loss, val_loss, train_acc, val_acc;
};

struct TrainResult {
  MlpModel model;  // best checkpoint
  TrainCurves curves;
  std::size_t best_epoch = 0;  // 1-based
  QatState qat;                // state at the best epoch
};

// Labeled feature matrix (rows are samples).
struct LabeledSet {
  Matrix x;
  std::vector<int> y;
};

// Keeps the epoch with the best validation accuracy; ties go to lower
// validation loss, then the earlier epoch. A non-finite training loss throws
// Divergence naming the epoch.
TrainResult train(const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& config,
                  const std::vector<std::size_t>& dims = kDefaultMlpDims);

std::vector<int> predict(const MlpModel& model, const Matrix& x);

// Bias is stored as an int8 weight on the constant input row: its real value
// is bias * bias_scale with bias_scale = weight_q.scale * input_q.scale * 255.
struct QuantizedLayer {
  std::size_t in = 0, out = 0;
  std::vector<std::int8_t> weight;  // [out, in]
  QuantParams weight_q;
  std::vector<std::int8_t> bias;  // [out]
  double bias_scale = 0.0;
  QuantParams input_q;
  bool relu = true;
};

struct QuantizedModel {
  std::vector<QuantizedLayer> layers;
  const QuantParams& input_q() const { return layers.front().input_q; }
};

// Weights from the model; activation ranges from a float forward pass over
// `calibration` (Train-split features).
QuantizedModel quantize(const MlpModel& model, const Matrix& calibration);

// Integer reference inference. acc = sum w_q (x_q - zp) + 255 b_q is exact;
// real = acc * s_w * s_x; ReLU and requantization to the next layer's input
// codes are digital.
struct IntTrace {
  std::vector<std::vector<std::int64_t>> acc;  // per layer
  std::vector<std::vector<double>> real;       // per layer, before ReLU
  std::vector<std::vector<int>> codes;         // input codes per layer
};
std::vector<int> quantize_features(const QuantizedModel& model, std::span<const double> features);
std::vector<double> int_forward(const QuantizedModel& model, std::span<const double> features,
                                IntTrace* trace = nullptr);
std::vector<int> int_predict(const QuantizedModel& model, const Matrix& x);

int argmax(std::span<const double> v);

struct Metrics {
  std::size_t n = 0;
  double overall = 0.0;
  std::array<double, kNumClasses> per_class{};  // recall; 0 for an absent class
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};  // [true][predicted]
};

Metrics evaluate(std::span<const int> predicted, std::span<const int> truth);

// CSV `env,overall,healthy,heart_attack,liver_cancer`.
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const std::string& env, const Metrics& m);

Checkpoint model_to_checkpoint(const MlpModel& model);
MlpModel model_from_checkpoint(const Checkpoint& ck);
void put_quantized(Checkpoint& ck, const QuantizedModel& q);
QuantizedModel quantized_from_checkpoint(const Checkpoint& ck);

}  // namespace imc
