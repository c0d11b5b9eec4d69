#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "imc/checkpoint.hpp"
#include "imc/error.hpp"
#include "imc/optim.hpp"
#include "imc/rng.hpp"
#include "imc/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace imc;
using imc::testing::randn;

namespace {

// Textbook triple loop.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at(i, p) * b.at(p, j);
  return out;
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t naive_crc32(std::span<const std::uint8_t> bytes) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (auto byte : bytes) {
    c ^= byte;
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
  }
  return ~c;
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitIgnoresParentPosition) {
  Rng a(7), b(7);
  for (int i = 0; i < 13; ++i) b.next_u64();
  Rng ca = a.split(3), cb = b.split(3);
  EXPECT_EQ(ca.next_u64(), cb.next_u64());
  EXPECT_NE(a.split(3).next_u64(), a.split(4).next_u64());
}

TEST(Rng, NormalMoments) {
  Rng r(1);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  Rng r(2);
  std::array<int, 5> hits{};
  for (int i = 0; i < 5000; ++i) ++hits[static_cast<std::size_t>(r.uniform_int(-2, 2) + 2)];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Tensor, MatmulMatchesNaiveOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    const auto m = static_cast<std::size_t>(r.uniform_int(1, 9)), k = static_cast<std::size_t>(r.uniform_int(1, 9)),
               n = static_cast<std::size_t>(r.uniform_int(1, 9));
    const Tensor a = randn({m, k}, seed * 3 + 1), b = randn({k, n}, seed * 3 + 2);
    const auto got = matmul(a, b);
    const auto want = naive_matmul(a, b);
    ASSERT_EQ(got.shape(), (Shape{m, n}));
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.at(i), want[i], 1e-12);
  }
}

TEST(Tensor, ShapeMismatchIsDimensionError) {
  const Tensor a = randn({2, 3}, 1), b = randn({2, 3}, 2);
  try {
    matmul(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dimension);
  }
  EXPECT_THROW(add(a, randn({3, 3}, 3)), Error);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  const Tensor s = softmax(randn({4, 7}, 5, 30.0));
  for (std::size_t r = 0; r < 4; ++r) {
    double t = 0;
    for (std::size_t c = 0; c < 7; ++c) t += s.at(r, c);
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
}

TEST(Tensor, NoTapeNoRecording) {
  Tensor x = randn({2, 2}, 1);
  x.set_requires_grad(true);
  EXPECT_EQ(Tape::current(), nullptr);
  Tensor y = sum_squares(x);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor z = sum_squares(randn({2, 2}, 2));  // no input requires grad
    EXPECT_EQ(tape.size(), 0u);
    Tensor w = sum_squares(x);
    EXPECT_EQ(tape.size(), 1u);
  }
  EXPECT_EQ(Tape::current(), nullptr);
}

TEST(Tensor, GradientSuiteMatchesFiniteDifferences) {
  for (const auto& [name, res] : imc::testing::gradient_suite()) {
    EXPECT_LE(res.max_rel_error, 1e-4) << name << " worst at " << res.worst;
    EXPECT_GT(res.checked, 0u) << name;
  }
}

TEST(Tensor, FakeQuantStraightThrough) {
  Tensor x({1, 4}, {0.26, -0.74, 5.0, -5.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    backward(sum(fake_quant(x, 0.5, 0, -4, 4)));
  }
  const Tensor y = fake_quant(x, 0.5, 0, -4, 4);
  EXPECT_DOUBLE_EQ(y.at(0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1), -0.5);
  EXPECT_DOUBLE_EQ(y.at(2), 2.0);
  EXPECT_DOUBLE_EQ(y.at(3), -2.0);
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);
  EXPECT_EQ(x.grad()[3], 0.0);
}

TEST(Optim, AdamFirstStepMovesByLearningRate) {
  // With bias correction the first Adam step is lr * sign(g) (up to eps).
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  p.mutable_grad()[0] = 4.0;
  p.mutable_grad()[1] = -0.25;
  p.mutable_grad()[2] = 1e-3;
  Adam opt({p}, {0.1, 0.9, 0.999, 1e-12});
  opt.step();
  EXPECT_NEAR(p.at(0), 0.9, 1e-9);
  EXPECT_NEAR(p.at(1), -1.9, 1e-9);
  EXPECT_NEAR(p.at(2), 0.4, 1e-6);
}

TEST(Optim, AdamMinimizesQuadratic) {
  Tensor p({2}, {3.0, -4.0}, true);
  Adam opt({p}, {0.05});
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    TapeScope scope(tape);
    backward(sum_squares(p));
    opt.step();
    opt.zero_grad();
  }
  EXPECT_NEAR(p.at(0), 0.0, 1e-2);
  EXPECT_NEAR(p.at(1), 0.0, 1e-2);
}

TEST(Checkpoint, RoundTripAllDtypes) {
  Checkpoint ck;
  ck.put("w", randn({2, 3}, 1));
  const std::vector<std::int64_t> iv{-5, 0, 1LL << 40};
  ck.put_i64("i", {3}, iv);
  const std::vector<std::uint8_t> uv{0, 7, 255};
  ck.put_u8("u", {3}, uv);
  const std::vector<std::int8_t> sv{-128, 0, 127};
  ck.put_i8("s", {3}, sv);
  ck.put_string("kind", "test");
  ck.put_scalar("x", 0.1);
  const auto bytes = ck.serialize();
  const auto back = Checkpoint::parse(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.i64("i"), iv);
  EXPECT_EQ(back.u8("u"), uv);
  EXPECT_EQ(back.i8("s"), sv);
  EXPECT_EQ(back.string("kind"), "test");
  EXPECT_EQ(back.scalar("x"), 0.1);
  const auto w = back.tensor("w");
  EXPECT_EQ(w.shape(), (Shape{2, 3}));
  EXPECT_EQ(w.at(4), randn({2, 3}, 1).at(4));
}

TEST(Checkpoint, ChecksumMatchesBitwiseCrcOracle) {
  Checkpoint ck;
  ck.put("w", randn({5}, 2));
  const auto bytes = ck.serialize();
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 4);
  const std::uint32_t stored = bytes[bytes.size() - 4] | (bytes[bytes.size() - 3] << 8) |
                               (bytes[bytes.size() - 2] << 16) | (std::uint32_t(bytes[bytes.size() - 1]) << 24);
  EXPECT_EQ(stored, naive_crc32(body));
  EXPECT_EQ(crc32_of(body), naive_crc32(body));
}

TEST(Checkpoint, CorruptionAndVersionAreIntegrityErrors) {
  Checkpoint ck;
  ck.put("w", randn({5}, 2));
  auto bytes = ck.serialize();
  auto flipped = bytes;
  flipped[10] ^= 0x40;
  try {
    Checkpoint::parse(flipped);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Integrity);
  }
  // Version bump with a recomputed checksum.
  auto v2 = bytes;
  v2[4] = 2;
  const auto crc = crc32_of({v2.data(), v2.size() - 4});
  for (int i = 0; i < 4; ++i) v2[v2.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  try {
    Checkpoint::parse(v2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Integrity);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "imc_test_ck.imcf";
  Checkpoint ck;
  ck.put_scalar("a", 3.5);
  ck.save(path);
  EXPECT_EQ(Checkpoint::load(path).scalar("a"), 3.5);
  std::filesystem::remove(path);
}
