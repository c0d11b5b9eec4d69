#pragma once

// Functional model of one 256x256 1T1R crossbar: integer conductance levels,
// stuck cells, closed-loop programming, noisy reads and the DAC/VMM/ADC path.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "imc/checkpoint.hpp"
#include "imc/error.hpp"
#include "imc/rng.hpp"

namespace imc {

inline constexpr std::size_t kTileDim = 256;
inline constexpr std::size_t kTileCells = kTileDim * kTileDim;

struct DeviceParams {
  double program_noise_sigma = 1.2;  // level units
  double read_noise_sigma = 0.3;
  double stuck_off_rate = 0.0005;
  double stuck_on_rate = 0.0005;
  double pulse_step_fraction = 0.3;  // eta
  std::size_t max_program_iters = 100;
  double rmse_criterion = 5.0;  // free-cell RMSE above this fails programming

  void validate() const;
  // No noise, no stuck cells, single-pulse convergence.
  static DeviceParams ideal();
};

enum class CellState : std::uint8_t { Free = 0, StuckOff = 1, StuckOn = 2 };

// ADC transfer: clamp(floor((acc - reference) / 2^shift), 0, 255). The
// reference current is zero unless the controller sets one per conversion.
struct AdcConfig {
  unsigned shift = 0;
  std::int64_t reference = 0;
};

std::uint8_t adc_convert(std::int64_t acc, const AdcConfig& adc);

struct StuckCell {
  std::uint16_t row, col;
  CellState state;
  std::uint8_t target;
};

struct ProgramReport {
  double rmse_all = 0.0;
  double rmse_free = 0.0;
  std::size_t max_iterations = 0;  // pulses applied to the slowest free cell
  double mean_iterations = 0.0;
  std::size_t unconverged = 0;  // free cells that hit max_program_iters
  std::size_t stuck_off = 0, stuck_on = 0;
  std::vector<StuckCell> stuck_cells;

  std::size_t stuck_count() const noexcept { return stuck_off + stuck_on; }
};

class ProgrammingError : public Error {
 public:
  ProgrammingError(const std::string& what, ProgramReport report)
      : Error(ErrorKind::Programming, what), report_(std::move(report)) {}
  const ProgramReport& report() const noexcept { return report_; }

 private:
  ProgramReport report_;
};

class CrossbarTile {
 public:
  // Stuck cells and the pre-programming state come from `rng`; the tile keeps
  // the stream for its own programming noise.
  CrossbarTile(const DeviceParams& params, Rng rng);

  const DeviceParams& params() const noexcept { return params_; }
  std::uint8_t level(std::size_t row, std::size_t col) const { return g_.at(index(row, col)); }
  CellState state(std::size_t row, std::size_t col) const { return mask_.at(index(row, col)); }
  std::span<const std::uint8_t> levels() const noexcept { return g_; }
  std::span<const CellState> states() const noexcept { return mask_; }

  // Test hooks: place a cell directly, bypassing programming.
  void force_level(std::size_t row, std::size_t col, std::uint8_t level);
  void force_state(std::size_t row, std::size_t col, CellState state);

  // Write-verify loop per free cell: pulse g += round(eta (target - g) + N(0,
  // sigma_p)), clamped; read back with read noise; stop once the read is
  // within 1 level of target or after max_program_iters pulses. Throws
  // ProgrammingError when the free-cell RMSE exceeds the criterion.
  ProgramReport program_closed_loop(std::span<const std::uint8_t> target);
  // Same loop without the criterion check.
  ProgramReport program_unchecked(std::span<const std::uint8_t> target);

  // clamp(round(g + N(0, sigma_r)), 0, 255) using the tile's own stream.
  std::uint8_t read_conductance(std::size_t row, std::size_t col);
  std::uint8_t read_conductance(std::size_t row, std::size_t col, Rng& rng) const;

  // Bitline accumulations sum_i g_ij v_i for columns [col_begin, col_end),
  // indexed from col_begin.
  // With `noise`, every contributing cell is a fresh noisy read; rows with a
  // zero input contribute nothing either way.
  std::vector<std::int64_t> accumulate(std::span<const std::uint8_t> v, Rng* noise, std::size_t col_begin = 0,
                                       std::size_t col_end = kTileDim) const;
  // 256 ADC outputs. A null `noise` reads exact conductances.
  std::vector<std::uint8_t> vmm(std::span<const std::uint8_t> v, const AdcConfig& adc, Rng* noise) const;

  Checkpoint to_checkpoint() const;
  static CrossbarTile from_checkpoint(const Checkpoint& ck);

 private:
  static std::size_t index(std::size_t row, std::size_t col);
  std::uint8_t noisy_read(std::size_t i, Rng& rng) const;

  DeviceParams params_;
  Rng rng_;
  std::vector<std::uint8_t> g_;
  std::vector<CellState> mask_;
};

// Programs 256 cells to each of the 256 levels on one simulated array and
// reads every cell back once.
struct CdfStudy {
  std::vector<std::array<std::uint32_t, 256>> histogram;  // [target][read]
  std::array<int, 256> medians{};
  ProgramReport report;

  std::size_t stuck_count() const noexcept { return report.stuck_count(); }
};

CdfStudy conductance_cdf_study(const DeviceParams& params, std::uint64_t seed, std::size_t n_cells = kTileCells);
// CSV `target_level,read_level,cumulative_fraction`, one row per observed
// read level of each target.
void write_cdf_csv(std::ostream& os, const CdfStudy& study);

}  // namespace imc
