#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "imc/classifier.hpp"
#include "imc/error.hpp"
#include "support/gradcheck.hpp"

using namespace imc;

namespace {

// Three Gaussian blobs in `dim` dimensions.
LabeledSet blobs(std::size_t n, std::size_t dim, std::uint64_t seed, double spread = 0.6) {
  Rng r(seed);
  LabeledSet s{Matrix(n, dim), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    s.y[i] = c;
    for (std::size_t j = 0; j < dim; ++j) s.x(i, j) = (j % 3 == static_cast<std::size_t>(c) ? 1.5 : 0.0) + spread * r.normal();
  }
  return s;
}

// Independent integer reference: straight from the stored codes.
std::vector<std::int64_t> oracle_acc(const QuantizedLayer& l, const std::vector<int>& codes) {
  std::vector<std::int64_t> acc(l.out);
  for (std::size_t j = 0; j < l.out; ++j) {
    long long s = 0;
    for (std::size_t i = 0; i < l.in; ++i)
      s += static_cast<long long>(l.weight[j * l.in + i]) * (codes[i] - l.input_q.zero_point);
    acc[j] = s + 255LL * l.bias[j];
  }
  return acc;
}

}  // namespace

TEST(Quantizer, WeightCodesSymmetricAndWithinHalfStep) {
  Rng r(1);
  std::vector<double> w(500);
  for (auto& v : w) v = r.normal();
  const auto q = weight_qparams(w);
  EXPECT_EQ(q.zero_point, 0);
  EXPECT_EQ(q.qmin(), -127);  // symmetric range
  EXPECT_EQ(q.qmax(), 127);
  double m = 0;
  for (double v : w) m = std::max(m, std::abs(v));
  EXPECT_DOUBLE_EQ(q.scale, m / 127.0);
  for (double v : w) {
    const int c = q.quantize(v);
    EXPECT_LE(std::abs(c), 127);
    EXPECT_LE(std::abs(q.dequantize(c) - v), q.scale / 2 + 1e-12);
  }
}

TEST(Quantizer, AllZeroWeightsAreCalibrationError) {
  const std::vector<double> w(10, 0.0);
  try {
    weight_qparams(w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Calibration);
  }
}

TEST(Quantizer, ActivationZeroIsExact) {
  Rng r(2);
  std::vector<double> a(1000);
  for (auto& v : a) v = r.normal(0.5, 1.0);
  const auto q = activation_qparams(a);
  EXPECT_FALSE(q.is_signed);
  EXPECT_EQ(q.dequantize(q.quantize(0.0)), 0.0);
  std::vector<double> relu_out(1000);
  for (auto& v : relu_out) v = std::max(0.0, r.normal());
  EXPECT_EQ(activation_qparams(relu_out).zero_point, 0);
}

TEST(Quantizer, SignedInputUsesNineBits) {
  const std::vector<double> v{-2.0, -1.0, 0.0, 1.0, 2.0};
  const auto q = signed_input_qparams(v, 9, 0.0, 100.0);
  EXPECT_EQ(q.qmax(), 255);
  EXPECT_EQ(q.qmin(), -255);
  EXPECT_EQ(q.quantize(2.0), 255);
  EXPECT_EQ(q.quantize(-2.0), -255);
  EXPECT_EQ(q.quantize(100.0), 255);
}

TEST(Quantizer, PercentileInterpolates) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({5}, 99.9), 5.0);
  EXPECT_DOUBLE_EQ(percentile({3, 1, 2}, 0), 1.0);
}

TEST(Classifier, InitRejectsLayersWiderThanATile) {
  Rng r(1);
  EXPECT_THROW(MlpModel::init({256, 10, 3}, r), Error);
  EXPECT_THROW(MlpModel::init({255, 256, 3}, r), Error);
  EXPECT_NO_THROW(MlpModel::init({255, 255, 3}, r));
}

TEST(Classifier, LossIsCrossEntropyPlusWeightPenalty) {
  Rng r(3);
  const auto model = MlpModel::init({4, 5, 3}, r);
  const auto data = blobs(6, 4, 4);
  const Tensor x({6, 4}, data.x.data);
  const double l0 = loss(model, x, data.y, 0.0).item();
  const double l1 = loss(model, x, data.y, 0.5).item();
  EXPECT_NEAR(l1 - l0, 0.5 * weight_norm_sq(model), 1e-12);
  EXPECT_NEAR(l0, cross_entropy(forward(model, x), data.y).item(), 1e-12);
}

TEST(Classifier, TrainsSeparableBlobs) {
  const auto train_set = blobs(300, 12, 5), val = blobs(90, 12, 6), test = blobs(150, 12, 7);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.qat_warmup_epochs = 10;
  cfg.seed = 1;
  const auto res = train(train_set, val, cfg, {12, 16, 8, 3});
  EXPECT_LT(res.curves.train_loss.back(), res.curves.train_loss.front());
  EXPECT_GT(res.best_epoch, cfg.qat_warmup_epochs);  // selection waits for the QAT phase
  const auto m = evaluate(predict(res.model, test.x), test.y);
  EXPECT_GT(m.overall, 0.9);
  const auto q = quantize(res.model, train_set.x);
  const auto mq = evaluate(int_predict(q, test.x), test.y);
  EXPECT_GT(mq.overall, m.overall - 0.03);
}

TEST(Classifier, TrainingIsDeterministic) {
  const auto train_set = blobs(60, 6, 8), val = blobs(30, 6, 9);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.qat_warmup_epochs = 2;
  cfg.seed = 11;
  const auto a = train(train_set, val, cfg, {6, 8, 3});
  const auto b = train(train_set, val, cfg, {6, 8, 3});
  EXPECT_EQ(a.curves.val_loss, b.curves.val_loss);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  const auto sa = model_to_checkpoint(a.model).serialize(), sb = model_to_checkpoint(b.model).serialize();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) ASSERT_EQ(sa[i], sb[i]) << "byte " << i;
}

TEST(Classifier, ExplodingLearningRateIsDivergence) {
  const auto train_set = blobs(60, 6, 8);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.adam.lr = 1e300;
  cfg.qat_enabled = false;
  try {
    train(train_set, blobs(9, 6, 1), cfg, {6, 8, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Divergence);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(Classifier, IntForwardMatchesIntegerOracle) {
  const auto train_set = blobs(120, 10, 12);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.qat_warmup_epochs = 2;
  const auto res = train(train_set, blobs(30, 10, 13), cfg, {10, 12, 7, 3});
  const auto q = quantize(res.model, train_set.x);
  for (std::size_t r = 0; r < 40; ++r) {
    IntTrace tr;
    const auto logits = int_forward(q, train_set.x.row(r), &tr);
    std::vector<int> codes = quantize_features(q, train_set.x.row(r));
    for (std::size_t l = 0; l < q.layers.size(); ++l) {
      const auto& ql = q.layers[l];
      const auto acc = oracle_acc(ql, codes);
      ASSERT_EQ(tr.acc[l], acc);
      std::vector<int> next(ql.out);
      for (std::size_t j = 0; j < ql.out; ++j) {
        const double real = static_cast<double>(acc[j]) * ql.weight_q.scale * ql.input_q.scale;
        EXPECT_DOUBLE_EQ(tr.real[l][j], real);
        if (ql.relu) {
          const auto& nq = q.layers[l + 1].input_q;
          next[j] = static_cast<int>(std::clamp(std::round(std::max(0.0, real) / nq.scale) + nq.zero_point, 0.0, 255.0));
        }
      }
      if (ql.relu) codes = next;
    }
    EXPECT_EQ(logits, tr.real.back());
  }
}

TEST(Classifier, HiddenActivationsHaveZeroZeroPoint) {
  const auto train_set = blobs(60, 6, 14);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto res = train(train_set, blobs(9, 6, 15), cfg, {6, 8, 5, 3});
  const auto q = quantize(res.model, train_set.x);
  EXPECT_TRUE(q.layers[0].input_q.is_signed);
  EXPECT_EQ(q.layers[0].input_q.bit_width, 9);
  for (std::size_t l = 1; l < q.layers.size(); ++l) EXPECT_EQ(q.layers[l].input_q.zero_point, 0);
}

TEST(Metrics, ConfusionAndRecall) {
  const std::vector<int> truth{0, 0, 0, 1, 1, 2};
  const std::vector<int> pred{0, 1, 0, 1, 2, 2};
  const auto m = evaluate(pred, truth);
  EXPECT_EQ(m.n, 6u);
  EXPECT_DOUBLE_EQ(m.overall, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.per_class[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.per_class[1], 0.5);
  EXPECT_DOUBLE_EQ(m.per_class[2], 1.0);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_EQ(m.confusion[1][2], 1u);
  std::ostringstream os;
  write_metrics_header(os);
  write_metrics_row(os, "Float", m);
  EXPECT_EQ(os.str(), "env,overall,healthy,heart_attack,liver_cancer\nFloat,0.666667,0.666667,0.500000,1.000000\n");
  EXPECT_THROW(evaluate(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(Metrics, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1);
  EXPECT_EQ(argmax(std::vector<double>{2.0, 2.0, 2.0}), 0);
}

TEST(Classifier, CheckpointsRoundTrip) {
  Rng r(4);
  const auto model = MlpModel::init({5, 6, 3}, r);
  const auto data = blobs(30, 5, 16);
  const auto q = quantize(model, data.x);
  Checkpoint ck = model_to_checkpoint(model);
  put_quantized(ck, q);
  const auto back = Checkpoint::parse(ck.serialize());
  const auto m2 = model_from_checkpoint(back);
  const auto q2 = quantized_from_checkpoint(back);
  EXPECT_EQ(predict(m2, data.x), predict(model, data.x));
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(int_forward(q2, data.x.row(i)), int_forward(q, data.x.row(i)));
}
