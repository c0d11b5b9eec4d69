#include "imc/crossbar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace imc {

void DeviceParams::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::Contract, "DeviceParams: " + m); };
  if (!(program_noise_sigma >= 0.0) || !(read_noise_sigma >= 0.0)) bad("noise sigmas must be >= 0");
  if (!(stuck_off_rate >= 0.0 && stuck_off_rate <= 1.0) || !(stuck_on_rate >= 0.0 && stuck_on_rate <= 1.0) ||
      stuck_off_rate + stuck_on_rate > 1.0)
    bad("stuck rates must lie in [0, 1]");
  if (!(pulse_step_fraction > 0.0 && pulse_step_fraction <= 1.0)) bad("pulse_step_fraction must lie in (0, 1]");
  if (max_program_iters == 0) bad("max_program_iters must be positive");
  if (!(rmse_criterion >= 0.0)) bad("rmse_criterion must be >= 0");
}

DeviceParams DeviceParams::ideal() {
  DeviceParams p;
  p.program_noise_sigma = 0.0;
  p.read_noise_sigma = 0.0;
  p.stuck_off_rate = 0.0;
  p.stuck_on_rate = 0.0;
  p.pulse_step_fraction = 1.0;
  return p;
}

std::uint8_t adc_convert(std::int64_t acc, const AdcConfig& adc) {
  const std::int64_t d = acc - adc.reference;
  // Arithmetic shift is floor division for negative values too.
  const std::int64_t q = d >> adc.shift;
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(q, 0, 255));
}

namespace {

std::uint8_t clamp_level(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

}  // namespace

CrossbarTile::CrossbarTile(const DeviceParams& params, Rng rng)
    : params_(params), rng_(std::move(rng)), g_(kTileCells), mask_(kTileCells, CellState::Free) {
  params_.validate();
  Rng init = rng_.split(0);
  for (std::size_t i = 0; i < kTileCells; ++i) {
    const double u = init.uniform();
    if (u < params_.stuck_off_rate) mask_[i] = CellState::StuckOff;
    else if (u < params_.stuck_off_rate + params_.stuck_on_rate) mask_[i] = CellState::StuckOn;
    // As-fabricated state: uniform over levels.
    const auto level = static_cast<std::uint8_t>(init.uniform_int(0, 255));
    g_[i] = mask_[i] == CellState::StuckOff ? 0 : mask_[i] == CellState::StuckOn ? 255 : level;
  }
  rng_ = rng_.split(1);
}

std::size_t CrossbarTile::index(std::size_t row, std::size_t col) {
  if (row >= kTileDim || col >= kTileDim)
    fail(ErrorKind::Index, "crossbar cell (" + std::to_string(row) + ", " + std::to_string(col) + ") out of range");
  return row * kTileDim + col;
}

void CrossbarTile::force_level(std::size_t row, std::size_t col, std::uint8_t level) { g_[index(row, col)] = level; }

void CrossbarTile::force_state(std::size_t row, std::size_t col, CellState state) {
  const auto i = index(row, col);
  mask_[i] = state;
  if (state == CellState::StuckOff) g_[i] = 0;
  if (state == CellState::StuckOn) g_[i] = 255;
}

std::uint8_t CrossbarTile::noisy_read(std::size_t i, Rng& rng) const {
  if (params_.read_noise_sigma == 0.0) return g_[i];
  return clamp_level(std::round(g_[i] + params_.read_noise_sigma * rng.normal()));
}

std::uint8_t CrossbarTile::read_conductance(std::size_t row, std::size_t col) {
  return noisy_read(index(row, col), rng_);
}

std::uint8_t CrossbarTile::read_conductance(std::size_t row, std::size_t col, Rng& rng) const {
  return noisy_read(index(row, col), rng);
}

ProgramReport CrossbarTile::program_unchecked(std::span<const std::uint8_t> target) {
  if (target.size() != kTileCells)
    fail(ErrorKind::Dimension, "program: target must hold " + std::to_string(kTileCells) + " levels");
  ProgramReport rep;
  double sq_all = 0.0, sq_free = 0.0, pulses = 0.0;
  std::size_t n_free = 0;
  const double eta = params_.pulse_step_fraction, sp = params_.program_noise_sigma;
  for (std::size_t i = 0; i < kTileCells; ++i) {
    const int t = target[i];
    if (mask_[i] != CellState::Free) {
      (mask_[i] == CellState::StuckOff ? rep.stuck_off : rep.stuck_on) += 1;
      rep.stuck_cells.push_back({static_cast<std::uint16_t>(i / kTileDim), static_cast<std::uint16_t>(i % kTileDim),
                                 mask_[i], target[i]});
    } else {
      std::size_t it = 0;
      bool done = false;
      while (!done && it < params_.max_program_iters) {
        const double step = eta * (t - g_[i]) + (sp > 0.0 ? sp * rng_.normal() : 0.0);
        g_[i] = clamp_level(g_[i] + std::round(step));
        ++it;
        done = std::abs(noisy_read(i, rng_) - t) <= 1;
      }
      rep.unconverged += done ? 0 : 1;
      rep.max_iterations = std::max(rep.max_iterations, it);
      pulses += static_cast<double>(it);
      ++n_free;
      sq_free += double(g_[i] - t) * double(g_[i] - t);
    }
    sq_all += double(g_[i] - t) * double(g_[i] - t);
  }
  rep.rmse_all = std::sqrt(sq_all / static_cast<double>(kTileCells));
  rep.rmse_free = n_free ? std::sqrt(sq_free / static_cast<double>(n_free)) : 0.0;
  rep.mean_iterations = n_free ? pulses / static_cast<double>(n_free) : 0.0;
  return rep;
}

ProgramReport CrossbarTile::program_closed_loop(std::span<const std::uint8_t> target) {
  auto rep = program_unchecked(target);
  if (rep.rmse_free > params_.rmse_criterion) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "programming failed: free-cell RMSE %.3f exceeds %.3f", rep.rmse_free,
                  params_.rmse_criterion);
    throw ProgrammingError(buf, std::move(rep));
  }
  return rep;
}

std::vector<std::int64_t> CrossbarTile::accumulate(std::span<const std::uint8_t> v, Rng* noise, std::size_t col_begin,
                                                   std::size_t col_end) const {
  if (v.size() != kTileDim) fail(ErrorKind::Dimension, "vmm: input must hold 256 DAC codes");
  if (col_begin > col_end || col_end > kTileDim) fail(ErrorKind::Index, "vmm: bad column range");
  std::vector<std::int64_t> acc(col_end - col_begin, 0);
  const bool noisy = noise && params_.read_noise_sigma > 0.0;
  for (std::size_t r = 0; r < kTileDim; ++r) {
    const std::int64_t vi = v[r];
    if (vi == 0) continue;
    const std::uint8_t* row = g_.data() + r * kTileDim;
    if (noisy) {
      for (std::size_t c = col_begin; c < col_end; ++c) acc[c - col_begin] += vi * noisy_read(r * kTileDim + c, *noise);
    } else {
      for (std::size_t c = col_begin; c < col_end; ++c) acc[c - col_begin] += vi * row[c];
    }
  }
  return acc;
}

std::vector<std::uint8_t> CrossbarTile::vmm(std::span<const std::uint8_t> v, const AdcConfig& adc, Rng* noise) const {
  const auto acc = accumulate(v, noise);
  std::vector<std::uint8_t> out(kTileDim);
  for (std::size_t c = 0; c < kTileDim; ++c) out[c] = adc_convert(acc[c], adc);
  return out;
}

Checkpoint CrossbarTile::to_checkpoint() const {
  Checkpoint ck;
  ck.put_string("kind", "tile");
  const double p[7] = {params_.program_noise_sigma, params_.read_noise_sigma, params_.stuck_off_rate,
                       params_.stuck_on_rate,       params_.pulse_step_fraction,
                       static_cast<double>(params_.max_program_iters), params_.rmse_criterion};
  ck.put_f64("params", {7}, p);
  ck.put_int("rng_seed", static_cast<std::int64_t>(rng_.seed()));
  ck.put_u8("levels", {kTileDim, kTileDim}, g_);
  std::vector<std::uint8_t> mask(kTileCells);
  for (std::size_t i = 0; i < kTileCells; ++i) mask[i] = static_cast<std::uint8_t>(mask_[i]);
  ck.put_u8("mask", {kTileDim, kTileDim}, mask);
  return ck;
}

CrossbarTile CrossbarTile::from_checkpoint(const Checkpoint& ck) {
  if (!ck.has("kind") || ck.string("kind") != "tile") fail(ErrorKind::Data, "checkpoint is not a crossbar tile");
  const auto p = ck.f64("params");
  if (p.size() != 7) fail(ErrorKind::Data, "tile checkpoint: bad params");
  DeviceParams dp{p[0], p[1], p[2], p[3], p[4], static_cast<std::size_t>(p[5]), p[6]};
  CrossbarTile tile(dp, Rng(0));
  tile.rng_ = Rng(static_cast<std::uint64_t>(ck.integer("rng_seed")));
  auto levels = ck.u8("levels");
  auto mask = ck.u8("mask");
  if (levels.size() != kTileCells || mask.size() != kTileCells) fail(ErrorKind::Data, "tile checkpoint: bad size");
  tile.g_ = std::move(levels);
  for (std::size_t i = 0; i < kTileCells; ++i) {
    if (mask[i] > 2) fail(ErrorKind::Data, "tile checkpoint: bad cell state");
    tile.mask_[i] = static_cast<CellState>(mask[i]);
  }
  return tile;
}

// ---- CDF study ------------------------------------------------------------------------

CdfStudy conductance_cdf_study(const DeviceParams& params, std::uint64_t seed, std::size_t n_cells) {
  if (n_cells == 0 || n_cells % 256) fail(ErrorKind::Contract, "cdf study: n_cells must be a positive multiple of 256");
  CdfStudy study;
  study.histogram.assign(256, {});
  const Rng root = Rng(seed).split(streams::kDevice);
  const std::size_t n_tiles = (n_cells + kTileCells - 1) / kTileCells;
  std::vector<std::uint8_t> target(kTileCells);
  for (std::size_t i = 0; i < kTileCells; ++i) target[i] = static_cast<std::uint8_t>((i / kTileDim + i % kTileDim) % 256);
  double sq_all = 0.0, sq_free = 0.0;
  std::size_t n_all = 0, n_free = 0;
  for (std::size_t k = 0; k < n_tiles; ++k) {
    CrossbarTile tile(params, root.split(k));
    const auto rep = tile.program_unchecked(target);
    const std::size_t used = std::min(kTileCells, n_cells - k * kTileCells);
    // Only cells inside the requested count enter the statistics.
    Rng read_rng = root.split(k).split(99);
    for (std::size_t i = 0; i < used; ++i) {
      const std::uint8_t r = tile.read_conductance(i / kTileDim, i % kTileDim, read_rng);
      ++study.histogram[target[i]][r];
      const double e = double(tile.levels()[i]) - double(target[i]);
      sq_all += e * e;
      ++n_all;
      if (tile.states()[i] == CellState::Free) {
        sq_free += e * e;
        ++n_free;
      } else {
        (tile.states()[i] == CellState::StuckOff ? study.report.stuck_off : study.report.stuck_on) += 1;
      }
    }
    study.report.max_iterations = std::max(study.report.max_iterations, rep.max_iterations);
    study.report.unconverged += rep.unconverged;
  }
  study.report.rmse_all = std::sqrt(sq_all / static_cast<double>(n_all));
  study.report.rmse_free = n_free ? std::sqrt(sq_free / static_cast<double>(n_free)) : 0.0;
  for (std::size_t t = 0; t < 256; ++t) {
    std::uint64_t total = 0;
    for (auto c : study.histogram[t]) total += c;
    std::uint64_t cum = 0;
    study.medians[t] = -1;
    for (std::size_t r = 0; r < 256 && total; ++r) {
      cum += study.histogram[t][r];
      if (2 * cum >= total) {
        study.medians[t] = static_cast<int>(r);
        break;
      }
    }
  }
  return study;
}

void write_cdf_csv(std::ostream& os, const CdfStudy& study) {
  os << "target_level,read_level,cumulative_fraction\n";
  char buf[64];
  for (std::size_t t = 0; t < study.histogram.size(); ++t) {
    std::uint64_t total = 0;
    for (auto c : study.histogram[t]) total += c;
    std::uint64_t cum = 0;
    for (std::size_t r = 0; r < 256; ++r) {
      if (!study.histogram[t][r]) continue;
      cum += study.histogram[t][r];
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f\n", t, r, static_cast<double>(cum) / static_cast<double>(total));
      os << buf;
    }
  }
}

}  // namespace imc
