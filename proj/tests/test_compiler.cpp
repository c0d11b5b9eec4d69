#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imc/compiler.hpp"

using namespace imc;

namespace {

constexpr double kGLo = 50, kGHi = 200, kSpan = kGHi - kGLo;

// Level for a weight code straight from the affine map, rounded half up.
int oracle_level(int w) { return static_cast<int>(std::floor(kGLo + (w + 128) * kSpan / 255.0 + 0.5)); }

struct OracleOut {
  std::vector<std::vector<std::vector<int>>> adc;  // [layer][pass][col]
  std::vector<std::vector<double>> real;
};

// Re-derives every ADC code and real output from the quantized model, using
// only the shifts and zero codes chosen by the compiler.
OracleOut oracle_run(const QuantizedModel& q, const MappingPlan& plan, std::span<const double> features) {
  OracleOut o;
  std::vector<int> codes(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) codes[i] = q.layers[0].input_q.quantize(features[i]);
  const double g0 = 255 * kGLo + 128 * kSpan;
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    const auto& ql = q.layers[l];
    const auto& lp = plan.layers[l];
    std::vector<std::pair<std::vector<int>, int>> passes;  // dac incl. bias row, sign
    if (ql.input_q.is_signed) {
      std::vector<int> pos(ql.in + 1, 0), neg(ql.in + 1, 0);
      for (std::size_t i = 0; i < ql.in; ++i) (codes[i] > 0 ? pos[i] : neg[i]) = std::abs(codes[i]);
      pos[ql.in] = 255;
      passes = {{pos, 1}, {neg, -1}};
    } else {
      std::vector<int> d(codes);
      d.push_back(255);
      passes = {{d, 1}};
    }
    std::vector<double> dot(ql.out, 0.0);
    o.adc.emplace_back();
    for (const auto& [dac, sign] : passes) {
      long long sum = 0;
      for (int v : dac) sum += v;
      const double step = std::ldexp(1.0, static_cast<int>(lp.adc_shift));
      const long long ref = static_cast<long long>(std::floor(g0 * sum / 255.0)) -
                            static_cast<long long>(lp.zero_code) * (1LL << lp.adc_shift);
      std::vector<int> pass_codes(ql.out);
      for (std::size_t j = 0; j < ql.out; ++j) {
        long long acc = 0;
        for (std::size_t i = 0; i < ql.in; ++i) acc += oracle_level(ql.weight[j * ql.in + i]) * dac[i];
        acc += oracle_level(ql.bias[j]) * dac[ql.in];
        const long long c = std::clamp<long long>(static_cast<long long>(std::floor((acc - ref) / step)), 0, 255);
        pass_codes[j] = static_cast<int>(c);
        // Bin midpoint (exact value when unshifted); code 0 of a ReLU layer means "at or below zero".
        double acc_hat = lp.adc_shift > 0 ? ref + (c + 0.5) * step : double(ref + c);
        if (lp.zero_code == 0 && c == 0) acc_hat = std::floor(g0 * sum / 255.0);
        dot[j] += sign * (acc_hat - g0 * sum / 255.0) * 255.0 / kSpan;
      }
      o.adc.back().push_back(pass_codes);
    }
    std::vector<double> real(ql.out);
    for (std::size_t j = 0; j < ql.out; ++j) {
      const double bias_err = ql.bias[j] - (255.0 * oracle_level(ql.bias[j]) - g0) / kSpan;
      real[j] = (dot[j] + 255.0 * bias_err) * ql.weight_q.scale * ql.input_q.scale;
    }
    if (l + 1 < q.layers.size()) {
      const auto& nq = q.layers[l + 1].input_q;
      codes.resize(ql.out);
      for (std::size_t j = 0; j < ql.out; ++j) codes[j] = nq.quantize(ql.relu ? std::max(0.0, real[j]) : real[j]);
    }
    o.real.push_back(std::move(real));
  }
  return o;
}

QuantParams qp(double scale, int zp, int bits, bool is_signed) {
  QuantParams q;
  q.scale = scale;
  q.zero_point = zp;
  q.bit_width = bits;
  q.is_signed = is_signed;
  return q;
}

// Small fixed model: 4 -> 3 (signed, split) -> 2.
QuantizedModel tiny_model() {
  QuantizedModel m;
  QuantizedLayer a;
  a.in = 4;
  a.out = 3;
  a.weight = {12, -40, 127, 0, -128, 33, 7, -5, 64, 64, -64, 90};
  a.weight_q = qp(0.02, 0, 8, true);
  a.bias = {3, -2, 0};
  a.input_q = qp(0.01, 0, 9, true);
  a.bias_scale = 0.02 * 0.01 * 255;
  a.relu = true;
  QuantizedLayer b;
  b.in = 3;
  b.out = 2;
  b.weight = {100, -20, 5, -90, 60, 1};
  b.weight_q = qp(0.015, 0, 8, true);
  b.bias = {-1, 4};
  b.input_q = qp(0.05, 0, 8, false);
  b.bias_scale = 0.015 * 0.05 * 255;
  b.relu = false;
  m.layers = {a, b};
  return m;
}

Matrix tiny_features() {
  Matrix x(8, 4);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = static_cast<double>((static_cast<int>(r * 7 + c * 5) % 23) - 11) / 8.0;
  return x;
}

QuantizedModel random_model(const std::vector<std::size_t>& dims, std::uint64_t seed, Matrix& calib) {
  Rng r(seed);
  const auto model = MlpModel::init(dims, r);
  calib = Matrix(64, dims.front());
  for (auto& v : calib.data) v = r.normal();
  return quantize(model, calib);
}

}  // namespace

TEST(Fold, BiasBecomesLastColumn) {
  Rng r(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto out = static_cast<std::size_t>(r.uniform_int(1, 6)), in = static_cast<std::size_t>(r.uniform_int(1, 6));
    std::vector<int> w(out * in), b(out);
    for (auto& v : w) v = static_cast<int>(r.uniform_int(-128, 127));
    for (auto& v : b) v = static_cast<int>(r.uniform_int(-128, 127));
    const auto f = fold_bias<int>(w, out, in, b);
    ASSERT_EQ(f.size(), out * (in + 1));
    std::vector<int> x(in);
    for (auto& v : x) v = static_cast<int>(r.uniform_int(-255, 255));
    for (std::size_t j = 0; j < out; ++j) {
      long long lhs = 0, rhs = b[j];
      for (std::size_t i = 0; i < in; ++i) {
        lhs += static_cast<long long>(f[j * (in + 1) + i]) * x[i];
        rhs += static_cast<long long>(w[j * in + i]) * x[i];
      }
      lhs += f[j * (in + 1) + in];
      ASSERT_EQ(lhs, rhs);
    }
  }
  EXPECT_THROW(fold_bias<int>(std::vector<int>(5), 2, 3, std::vector<int>(2)), Error);
}

TEST(Split, PositiveMinusNegativeRestoresInput) {
  Rng r(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> x(static_cast<std::size_t>(r.uniform_int(1, 40)));
    for (auto& v : x) v = static_cast<int>(r.uniform_int(-255, 255));
    const auto s = split_signed_input(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      ASSERT_EQ(int(s.pos[i]) - int(s.neg[i]), x[i]);
      ASSERT_TRUE(s.pos[i] == 0 || s.neg[i] == 0);
    }
  }
  EXPECT_THROW(split_signed_input(std::vector<int>{256}), Error);
  EXPECT_THROW(split_signed_input(std::vector<int>{-256}), Error);
}

TEST(Encoding, EndpointsAndRoundTrip) {
  const ConductanceEncoding enc;
  EXPECT_EQ(enc.encode(-128), 50);
  EXPECT_EQ(enc.encode(127), 200);
  EXPECT_EQ(enc.encode(0), 125);
  for (int w = -128; w <= 127; ++w) {
    EXPECT_EQ(enc.encode(w), oracle_level(w));
    EXPECT_LE(std::abs(enc.decode(enc.encode(w)) - w), 1) << w;
    if (w > -128) EXPECT_GE(enc.encode(w), enc.encode(w - 1));
  }
  EXPECT_THROW(enc.encode(128), Error);
  EXPECT_DOUBLE_EQ(enc.meta().slope, 150.0 / 255.0);
  EXPECT_THROW((ConductanceEncoding{200, 50}.validate()), Error);
}

TEST(Adc, ReconstructIsExactWithoutShift) {
  // With shift 0 and an unclamped code, reconstruct_dot recovers the level-domain dot product exactly.
  MappingPlan plan;
  LayerPlan layer;
  layer.zero_code = 128;
  Rng r(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t sum = r.uniform_int(0, 2000);
    const std::int64_t q = plan.encoding.g0_255() * sum;
    const std::int64_t ref = adc_reference(plan, layer, sum);
    const std::int64_t acc = ref + r.uniform_int(0, 255);
    const auto code = adc_convert(acc, {0, ref});
    EXPECT_EQ(reconstruct_dot(plan, layer, code, sum), 255 * 2 * acc - 2 * q);
  }
}

TEST(Adc, ReconstructWithinHalfBin) {
  MappingPlan plan;
  LayerPlan layer;
  layer.zero_code = 128;
  layer.adc_shift = 6;
  Rng r(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::int64_t sum = r.uniform_int(1, 5000);
    const std::int64_t ref = adc_reference(plan, layer, sum);
    const std::int64_t acc = ref + r.uniform_int(0, 255 * 64 + 63);
    const auto code = adc_convert(acc, {6, ref});
    const std::int64_t err = reconstruct_dot(plan, layer, code, sum) - (255 * 2 * acc - 2 * plan.encoding.g0_255() * sum);
    EXPECT_LE(std::abs(err), 255 * 64);
  }
}

TEST(Compile, PacksDefaultNetworkOntoTwoTiles) {
  Matrix calib;
  const auto q = random_model({128, 240, 96, 48, 3}, 5, calib);
  const auto plan = compile(q, calib);
  ASSERT_EQ(plan.tiles.size(), 2u);
  const std::size_t tile[4] = {0, 1, 1, 0}, col[4] = {0, 0, 96, 240};
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(plan.layers[l].tile, tile[l]);
    EXPECT_EQ(plan.layers[l].col_begin, col[l]);
  }
  EXPECT_TRUE(plan.layers[0].split_input);
  EXPECT_EQ(plan.layers[0].zero_code, 128);
  EXPECT_EQ(plan.layers[1].zero_code, 0);
  EXPECT_EQ(plan.layers[3].zero_code, 128);
  EXPECT_EQ(plan.vmms_per_sample(), 5u);
  EXPECT_EQ(plan.used_cells(), 129u * 240 + 241u * 96 + 97u * 48 + 49u * 3);
  EXPECT_EQ(plan.macs_per_sample(), 2u * 129 * 240 + 241u * 96 + 97u * 48 + 49u * 3);
  // Unused cells sit at the zero-weight level.
  EXPECT_EQ(plan.tiles[0].levels[200 * kTileDim + 10], 125);
  EXPECT_EQ(plan.tiles[1].levels[5 * kTileDim + 200], 125);
  for (const auto& l : plan.layers) EXPECT_LE(l.calibration_clamp, 0.01);
}

TEST(Compile, CapacityAndCalibrationErrors) {
  Matrix calib;
  const auto q = random_model({128, 240, 96, 48, 3}, 6, calib);
  CompileConfig one;
  one.npu_count = 1;
  try {
    compile(q, calib, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Capacity);
  }
  CompileConfig tight;
  tight.max_shift = 0;
  try {
    compile(q, calib, tight);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Calibration);
  }
  auto bad = q;
  bad.layers[1].input_q.zero_point = 3;
  try {
    compile(bad, calib);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Contract);
  }
}

TEST(Golden, MatchesIndependentIntegerOracle) {
  Matrix calib;
  const auto q = random_model({20, 30, 12, 3}, 7, calib);
  const auto plan = compile(q, calib);
  for (std::size_t r = 0; r < calib.rows; ++r) {
    const auto tr = golden_infer(plan, calib.row(r));
    const auto o = oracle_run(q, plan, calib.row(r));
    for (std::size_t l = 0; l < q.layers.size(); ++l) {
      ASSERT_EQ(tr.layers[l].adc.size(), o.adc[l].size());
      for (std::size_t p = 0; p < o.adc[l].size(); ++p)
        for (std::size_t j = 0; j < o.adc[l][p].size(); ++j) ASSERT_EQ(int(tr.layers[l].adc[p][j]), o.adc[l][p][j]);
      for (std::size_t j = 0; j < o.real[l].size(); ++j)
        ASSERT_NEAR(tr.layers[l].real[j], o.real[l][j], 1e-9 * (1 + std::abs(o.real[l][j])));
    }
  }
}

TEST(Golden, TracksTheIntegerModel) {
  Matrix calib;
  const auto q = random_model({20, 30, 12, 3}, 8, calib);
  const auto plan = compile(q, calib);
  std::size_t agree = 0;
  for (std::size_t r = 0; r < calib.rows; ++r)
    agree += golden_infer(plan, calib.row(r)).predicted == argmax(int_forward(q, calib.row(r)));
  EXPECT_GE(agree, calib.rows * 9 / 10);
}

TEST(Golden, TinyModelOracleAndCounts) {
  const auto q = tiny_model();
  const auto x = tiny_features();
  const auto plan = compile(q, x);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto tr = golden_infer(plan, x.row(r));
    const auto o = oracle_run(q, plan, x.row(r));
    EXPECT_EQ(tr.vmm_count, 3u);
    EXPECT_EQ(tr.mac_count, 2u * 5 * 3 + 4u * 2);
    EXPECT_EQ(tr.logit_codes.size(), 2u);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(int(tr.logit_codes[j]), o.adc[1][0][j]);
  }
}

TEST(PlanText, RoundTripAndHash) {
  Matrix calib;
  const auto q = random_model({20, 30, 12, 3}, 9, calib);
  const auto plan = compile(q, calib);
  const std::string text = plan_text(plan);
  std::istringstream is(text);
  const auto back = read_plan(is);
  EXPECT_EQ(plan_text(back), text);
  EXPECT_EQ(back.hash(), plan.hash());
  EXPECT_EQ(back.model_fingerprint, fingerprint(q));
  for (std::size_t r = 0; r < 5; ++r)
    EXPECT_EQ(golden_infer(back, calib.row(r)).logit_codes, golden_infer(plan, calib.row(r)).logit_codes);
}

TEST(PlanText, MalformedInputIsRejected) {
  const auto plan = compile(tiny_model(), tiny_features());
  const std::string text = plan_text(plan);
  auto expect_bad = [](std::string s) {
    std::istringstream is(s);
    EXPECT_THROW(read_plan(is), Error);
  };
  expect_bad("");
  expect_bad("plan v2\n" + text.substr(text.find('\n') + 1));
  expect_bad(text.substr(0, text.size() / 2));
  std::string bad_level = text;
  bad_level.replace(bad_level.find("levels\n") + 7, 3, "999");
  expect_bad(bad_level);
}

TEST(PlanText, MatchesGoldenFile) {
  const auto plan = compile(tiny_model(), tiny_features());
  const std::string path = std::string(IMC_TEST_DIR) + "/golden/tiny_plan.txt";
  if (std::getenv("IMC_WRITE_GOLDEN")) std::ofstream(path) << plan_text(plan);  // regenerate deliberately only
  std::ifstream f(path);
  ASSERT_TRUE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(plan_text(plan), ss.str());
}

TEST(Program, StuckCellsMapToWeights) {
  const auto plan = compile(tiny_model(), tiny_features());
  DeviceParams p = DeviceParams::ideal();
  p.stuck_off_rate = 0.05;
  const auto dev = program_plan(plan, p, 3);
  EXPECT_EQ(dev.plan_hash, plan.hash());
  ASSERT_EQ(dev.tiles.size(), plan.tiles.size());
  for (const auto& sw : dev.stuck_weights) {
    const auto& lp = plan.layers[sw.layer];
    EXPECT_LT(sw.row, lp.used_rows());
    EXPECT_LT(sw.col, lp.out);
    const double target = plan.tiles[sw.tile].levels[sw.row * kTileDim + lp.col_begin + sw.col];
    EXPECT_NEAR(sw.weight_error, -target * 255.0 / 150.0, 1e-9);
  }
  const auto again = program_plan(plan, p, 3);
  EXPECT_TRUE(std::equal(dev.tiles[0].levels().begin(), dev.tiles[0].levels().end(), again.tiles[0].levels().begin()));
}

TEST(Program, FailureNamesTheTile) {
  const auto plan = compile(tiny_model(), tiny_features());
  DeviceParams p;
  p.program_noise_sigma = 80;
  p.max_program_iters = 1;
  try {
    program_plan(plan, p, 1);
    FAIL();
  } catch (const ProgrammingError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("tile 0", 0), 0u);
  }
}
