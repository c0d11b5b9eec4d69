#pragma once

// Runs a compiled plan on programmed tiles and compares the three execution
// environments: float model, integer reference and simulated chip.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "imc/classifier.hpp"
#include "imc/compiler.hpp"

namespace imc {

struct RunOptions {
  bool noise_on = true;
  std::uint64_t noise_seed = 0;  // read-noise root; sample i uses its own derived stream
  std::size_t threads = 1;
};

// Throws Integrity when the device was not programmed from `plan`.
void check_device(const MappingPlan& plan, const ProgrammedDevice& device);

// One sample through the tiles. `noise` null reads exact conductances.
ExecutionTrace infer(const MappingPlan& plan, const ProgrammedDevice& device, std::span<const double> features,
                     Rng* noise);

struct BatchRun {
  std::vector<int> predicted;
  std::vector<ExecutionTrace> traces;
  double wall_seconds = 0.0;  // reported on stdout only, never written to artifacts
};

BatchRun infer_batch(const MappingPlan& plan, const ProgrammedDevice& device, const Matrix& features,
                     const RunOptions& options);
BatchRun golden_batch(const MappingPlan& plan, const Matrix& features, std::size_t threads = 1);

enum class Environment { Float, QuantizedSim, SocSim };
std::string_view environment_name(Environment env);

struct EnvResult {
  Environment environment;
  Metrics metrics;
};

// Layer-1 real outputs of SocSim minus QuantizedSim. `*_units` divide by
// weight_scale * input_scale * 255: the error expressed in weight codes
// applied to a full-scale input.
struct ResidualReport {
  double mean_abs = 0.0, max_abs = 0.0, rms = 0.0;
  double mean_abs_units = 0.0, max_abs_units = 0.0;
};

struct LayerTraceSummary {
  std::size_t layer = 0;  // 1-based
  std::size_t passes = 0, used_rows = 0, used_cols = 0;
  unsigned adc_shift = 0;
  std::size_t vmm_total = 0, mac_total = 0;
  double clamp_rate = 0.0;  // fraction of SocSim conversions at a rail
};

struct EnvComparison {
  std::vector<EnvResult> rows;  // Float, QuantizedSim, SocSim
  ResidualReport residual;
  std::vector<LayerTraceSummary> layers;
  std::size_t samples = 0;
  double soc_wall_seconds = 0.0;
};

// All three environments see the same test rows. Throws Integrity on a
// model/plan/device fingerprint mismatch.
EnvComparison compare_environments(const MlpModel& model, const QuantizedModel& quantized, const MappingPlan& plan,
                                   const ProgrammedDevice& device, const LabeledSet& test, const RunOptions& options);

void write_env_results(std::ostream& os, const EnvComparison& cmp);
// `layer,stat,value`
void write_residuals(std::ostream& os, const EnvComparison& cmp);
void write_trace_summary(std::ostream& os, const EnvComparison& cmp);

// SocSim accuracy for each (program noise sigma, device seed) pair.
struct SweepPoint {
  double program_noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};
std::vector<SweepPoint> program_noise_sweep(const MappingPlan& plan, const LabeledSet& test,
                                            const DeviceParams& base, std::span<const double> sigmas,
                                            std::span<const std::uint64_t> seeds, std::size_t threads = 1);
double median(std::vector<double> v);

}  // namespace imc
