#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "imc/crossbar.hpp"

using namespace imc;

namespace {

std::vector<std::uint8_t> random_levels(std::uint64_t seed) {
  Rng r(seed);
  std::vector<std::uint8_t> t(kTileCells);
  for (auto& v : t) v = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  return t;
}

}  // namespace

TEST(Adc, FloorShiftAndClamp) {
  EXPECT_EQ(adc_convert(0, {0, 0}), 0);
  EXPECT_EQ(adc_convert(255, {0, 0}), 255);
  EXPECT_EQ(adc_convert(256, {0, 0}), 255);
  EXPECT_EQ(adc_convert(-1, {0, 0}), 0);
  EXPECT_EQ(adc_convert(1023, {2, 0}), 255);
  EXPECT_EQ(adc_convert(7, {2, 0}), 1);
  EXPECT_EQ(adc_convert(100, {3, 60}), 5);
  EXPECT_EQ(adc_convert(59, {3, 60}), 0);  // floor of a negative quotient clamps to 0
  for (std::int64_t acc = -600; acc < 9000; acc += 37)
    EXPECT_EQ(adc_convert(acc, {5, 100}),
              static_cast<int>(std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((acc - 100) / 32.0)), 0, 255)));
}

TEST(Device, ParamsValidation) {
  DeviceParams p;
  p.pulse_step_fraction = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.read_noise_sigma = -1;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_NO_THROW(DeviceParams::ideal().validate());
}

TEST(Programming, DefaultParamsMeetCriterion) {
  const auto target = random_levels(1);
  CrossbarTile tile(DeviceParams{}, Rng(2));
  const auto rep = tile.program_closed_loop(target);
  EXPECT_LE(rep.rmse_free, 5.0);
  EXPECT_GT(rep.stuck_count(), 0u);
  EXPECT_EQ(rep.stuck_cells.size(), rep.stuck_count());
  std::size_t free = 0;
  double sq = 0;
  for (std::size_t i = 0; i < kTileCells; ++i)
    if (tile.states()[i] == CellState::Free) {
      const double e = double(tile.levels()[i]) - double(target[i]);
      sq += e * e;
      ++free;
    }
  EXPECT_NEAR(rep.rmse_free, std::sqrt(sq / free), 1e-12);
}

TEST(Programming, IdealDeviceIsExact) {
  const auto target = random_levels(3);
  CrossbarTile tile(DeviceParams::ideal(), Rng(4));
  const auto rep = tile.program_closed_loop(target);
  EXPECT_EQ(rep.rmse_all, 0.0);
  EXPECT_EQ(rep.stuck_count(), 0u);
  for (std::size_t i = 0; i < kTileCells; ++i) ASSERT_EQ(tile.levels()[i], target[i]);
}

TEST(Programming, StuckCellsKeepTheirLevel) {
  const auto target = random_levels(5);
  CrossbarTile tile(DeviceParams::ideal(), Rng(6));
  tile.force_state(3, 4, CellState::StuckOff);
  tile.force_state(10, 200, CellState::StuckOn);
  const auto rep = tile.program_unchecked(target);
  EXPECT_EQ(tile.level(3, 4), 0);
  EXPECT_EQ(tile.level(10, 200), 255);
  EXPECT_EQ(rep.stuck_off, 1u);
  EXPECT_EQ(rep.stuck_on, 1u);
  EXPECT_EQ(rep.rmse_free, 0.0);
}

TEST(Programming, HugeNoiseFailsWithReport) {
  DeviceParams p;
  p.program_noise_sigma = 60;
  p.max_program_iters = 2;
  CrossbarTile tile(p, Rng(7));
  try {
    tile.program_closed_loop(random_levels(8));
    FAIL();
  } catch (const ProgrammingError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Programming);
    EXPECT_GT(e.report().rmse_free, 5.0);
  }
}

TEST(Programming, SeededRunsAreReproducible) {
  const auto target = random_levels(9);
  CrossbarTile a(DeviceParams{}, Rng(10)), b(DeviceParams{}, Rng(10));
  a.program_unchecked(target);
  b.program_unchecked(target);
  EXPECT_TRUE(std::equal(a.levels().begin(), a.levels().end(), b.levels().begin()));
}

TEST(Vmm, MatchesBruteForce) {
  CrossbarTile tile(DeviceParams::ideal(), Rng(11));
  tile.program_unchecked(random_levels(12));
  Rng r(13);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::uint8_t> v(kTileDim);
    for (auto& x : v) x = static_cast<std::uint8_t>(r.uniform_int(0, 255));
    const AdcConfig adc{14, 1000};
    const auto out = tile.vmm(v, adc, nullptr);
    const auto acc = tile.accumulate(v, nullptr, 30, 70);
    ASSERT_EQ(acc.size(), 40u);
    for (std::size_t j = 0; j < kTileDim; ++j) {
      std::int64_t s = 0;
      for (std::size_t i = 0; i < kTileDim; ++i) s += std::int64_t(tile.level(i, j)) * v[i];
      EXPECT_EQ(out[j], adc_convert(s, adc));
      if (j >= 30 && j < 70) EXPECT_EQ(acc[j - 30], s);
    }
  }
}

TEST(Vmm, ReadNoiseIsZeroMeanAndSkipsZeroInputs) {
  CrossbarTile tile(DeviceParams{}, Rng(14));
  tile.program_unchecked(std::vector<std::uint8_t>(kTileCells, 128));
  std::vector<std::uint8_t> v(kTileDim, 0);
  Rng n(15);
  EXPECT_EQ(tile.accumulate(v, &n), std::vector<std::int64_t>(kTileDim, 0));
  v.assign(kTileDim, 1);
  const auto exact = tile.accumulate(v, nullptr);
  double diff = 0;
  for (int k = 0; k < 20; ++k) {
    const auto noisy = tile.accumulate(v, &n);
    for (std::size_t j = 0; j < kTileDim; ++j) diff += double(noisy[j] - exact[j]);
  }
  // 20 x 256 x 256 reads of sigma 0.3 rounded: the mean drift per column sum stays tiny.
  EXPECT_LT(std::abs(diff / (20.0 * kTileDim)), 2.0);
}

TEST(Vmm, RejectsBadShapes) {
  CrossbarTile tile(DeviceParams::ideal(), Rng(1));
  EXPECT_THROW(tile.vmm(std::vector<std::uint8_t>(10), {}, nullptr), Error);
  EXPECT_THROW(tile.accumulate(std::vector<std::uint8_t>(256), nullptr, 10, 300), Error);
  EXPECT_THROW(tile.level(256, 0), Error);
}

TEST(Tile, CheckpointRoundTrip) {
  CrossbarTile tile(DeviceParams{}, Rng(16));
  tile.program_unchecked(random_levels(17));
  const auto back = CrossbarTile::from_checkpoint(Checkpoint::parse(tile.to_checkpoint().serialize()));
  EXPECT_TRUE(std::equal(tile.levels().begin(), tile.levels().end(), back.levels().begin()));
  EXPECT_TRUE(std::equal(tile.states().begin(), tile.states().end(), back.states().begin()));
  EXPECT_EQ(back.params().program_noise_sigma, tile.params().program_noise_sigma);
}

TEST(Cdf, SmallStudyMediansTrackTargets) {
  const auto st = conductance_cdf_study(DeviceParams{}, 3, 256 * 64);
  std::uint64_t total = 0;
  for (const auto& h : st.histogram)
    for (auto c : h) total += c;
  EXPECT_EQ(total, 256u * 64u);
  for (int t = 0; t < 256; ++t) {
    ASSERT_GE(st.medians[t], 0);
    EXPECT_LE(std::abs(st.medians[t] - t), 2) << "target " << t;
  }
  std::ostringstream os;
  write_cdf_csv(os, st);
  EXPECT_EQ(os.str().rfind("target_level,read_level,cumulative_fraction\n", 0), 0u);
  EXPECT_THROW(conductance_cdf_study(DeviceParams{}, 3, 100), Error);
}
