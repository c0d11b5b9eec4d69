#pragma once

// Lowers a quantized MLP onto crossbar tiles: bias folding, signed-input
// splitting, offset conductance encoding, tile packing, ADC calibration and
// the digital post-processing recipe. Also hosts the layer executor shared by
// the integer reference model and the tile runtime.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "imc/classifier.hpp"
#include "imc/crossbar.hpp"

namespace imc {

// W' = [W | b]: out x (in + 1), row-major.
template <class T>
std::vector<T> fold_bias(std::span<const T> weight, std::size_t out, std::size_t in, std::span<const T> bias) {
  if (weight.size() != out * in || bias.size() != out)
    fail(ErrorKind::Dimension, "fold_bias: weight/bias shapes disagree");
  std::vector<T> folded;
  folded.reserve(out * (in + 1));
  for (std::size_t r = 0; r < out; ++r) {
    folded.insert(folded.end(), weight.begin() + static_cast<std::ptrdiff_t>(r * in),
                  weight.begin() + static_cast<std::ptrdiff_t>((r + 1) * in));
    folded.push_back(bias[r]);
  }
  return folded;
}

struct SplitInput {
  std::vector<std::uint8_t> pos, neg;  // x = pos - neg, at most one nonzero per element
};
// |x_i| must be <= 255.
SplitInput split_signed_input(std::span<const int> x);

struct EncodedColumnMeta {
  double g_zero = 0.0;  // level that encodes weight 0
  double slope = 0.0;   // levels per weight unit
};

// Integer form of the affine map level = g_lo + (w + 128) (g_hi - g_lo) / 255:
// 255 * level_real = g0_255 + span * w.
struct ConductanceEncoding {
  int g_lo = 50;
  int g_hi = 200;

  void validate() const;
  std::int64_t span() const noexcept { return g_hi - g_lo; }
  std::int64_t g0_255() const noexcept { return 255LL * g_lo + 128LL * span(); }
  std::uint8_t encode(int w_q) const;
  int decode(std::uint8_t level) const;
  EncodedColumnMeta meta() const;
};

std::vector<std::uint8_t> encode_conductance(std::span<const std::int8_t> w_q, const ConductanceEncoding& enc = {});

struct LayerPlan {
  std::size_t tile = 0;
  std::size_t col_begin = 0;  // rows always start at 0
  std::size_t in = 0, out = 0;
  bool split_input = false;
  bool relu = true;
  unsigned adc_shift = 0;
  int zero_code = 0;  // ADC code of a zero signal: 128 for signed results, 0 when ReLU follows directly
  double weight_scale = 0.0;
  QuantParams input_q;
  // Per-column digital correction of the bias cell's encoding error, in
  // units of 1 / (2 span) weight-code products.
  std::vector<std::int64_t> bias_trim;
  double calibration_clamp = 0.0;

  std::size_t used_rows() const noexcept { return in + 1; }
  std::size_t passes() const noexcept { return split_input ? 2 : 1; }
};

struct TileImage {
  std::vector<std::uint8_t> levels;  // 256 x 256 target levels
};

struct MappingPlan {
  std::uint64_t model_fingerprint = 0;
  std::size_t npu_count = 10;
  ConductanceEncoding encoding;
  std::vector<TileImage> tiles;
  std::vector<LayerPlan> layers;

  std::size_t used_cells() const;
  std::size_t macs_per_sample() const;
  std::size_t vmms_per_sample() const;
  // FNV-1a 64 of the serialized plan text.
  std::uint64_t hash() const;
};

struct CompileConfig {
  std::size_t npu_count = 10;
  ConductanceEncoding encoding;
  double max_clamp_fraction = 0.01;
  double fail_clamp_fraction = 0.10;
  unsigned max_shift = 24;
  std::size_t calibration_samples = 512;  // leading rows of the calibration batch
};

std::uint64_t fingerprint(const QuantizedModel& model);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Capacity error if a layer needs more than one tile or the layers do not fit
// on npu_count tiles; Calibration error if a layer clamps on more than
// fail_clamp_fraction of calibration conversions at max_shift.
MappingPlan compile(const QuantizedModel& model, const Matrix& calibration, const CompileConfig& config = {});

// ---- execution ---------------------------------------------------------------------

// Bitline sums of one pass: inputs are the 256 DAC codes of the tile rows,
// result covers columns [col_begin, col_begin + out).
using AccumulateFn =
    std::function<std::vector<std::int64_t>(const LayerPlan& layer, std::span<const std::uint8_t> dac)>;

struct LayerTrace {
  std::vector<std::vector<std::uint8_t>> adc;  // per pass, per column
  std::vector<double> real;                    // signed output before ReLU
  std::vector<int> next_codes;                 // input codes of the next layer
};

struct ExecutionTrace {
  std::vector<LayerTrace> layers;
  std::size_t vmm_count = 0;
  std::size_t mac_count = 0;
  std::vector<std::uint8_t> logit_codes;
  int predicted = 0;
};

// ADC reference of one conversion: floor(g0_255 * sum(v) / 255) - zero_code * 2^shift.
std::int64_t adc_reference(const MappingPlan& plan, const LayerPlan& layer, std::int64_t input_sum);
// Signed dot product sum_i w_i v_i reconstructed from an ADC code, times
// 2 span (exact integer).
std::int64_t reconstruct_dot(const MappingPlan& plan, const LayerPlan& layer, std::uint8_t code,
                             std::int64_t input_sum);

ExecutionTrace execute_plan(const MappingPlan& plan, std::span<const double> features, const AccumulateFn& accumulate);
// Exact integer sums against the plan's own target levels.
AccumulateFn golden_accumulator(const MappingPlan& plan);
ExecutionTrace golden_infer(const MappingPlan& plan, std::span<const double> features);

// ---- programming -------------------------------------------------------------------

struct StuckWeight {
  std::size_t tile, layer, row, col;
  double weight_error;  // (stuck level - target level) / slope, weight units
};

struct ProgrammedDevice {
  std::uint64_t plan_hash = 0;
  std::vector<CrossbarTile> tiles;
  std::vector<ProgramReport> reports;
  std::vector<StuckWeight> stuck_weights;
};

// Tile k draws from Rng(seed).split(kDevice).split(k). A tile whose free-cell
// RMSE exceeds the criterion throws ProgrammingError naming the tile.
ProgrammedDevice program_plan(const MappingPlan& plan, const DeviceParams& params, std::uint64_t seed);

// ---- text form ---------------------------------------------------------------------

void write_plan(std::ostream& os, const MappingPlan& plan);
std::string plan_text(const MappingPlan& plan);
MappingPlan read_plan(std::istream& is);

}  // namespace imc
