#pragma once

// Experiment orchestration shared by the CLI and the acceptance suite. Every
// step takes the config and an output directory and reads its inputs from
// files written by earlier steps, so commands compose.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "imc/classifier.hpp"
#include "imc/config.hpp"
#include "imc/diffusion.hpp"
#include "imc/pca.hpp"
#include "imc/runtime.hpp"

namespace imc {

// Classifier inputs: PCA coefficients times one global factor so the first
// coefficient has unit variance on the fitting set.
struct FeatureSpace {
  PcaModel pca;
  double scale = 1.0;

  Matrix transform(const Matrix& spectra) const;
};

// Fits on the Train-split Synthetic spectra.
FeatureSpace fit_feature_space(const SpectralDataset& dataset, std::size_t components);
Checkpoint feature_space_to_checkpoint(const FeatureSpace& fs);
FeatureSpace feature_space_from_checkpoint(const Checkpoint& ck);

SpectralDataset make_dataset(const ExperimentConfig& cfg);
// Re-derives the stratified split from the config seed. Generated spectra
// follow their references, and the test set holds Synthetic spectra only.
std::vector<std::string> apply_split(SpectralDataset& dataset, const ExperimentConfig& cfg);
LabeledSet labeled(const SpectralDataset& dataset, Split split, const FeatureSpace& fs);
// Evenly strided rows, at most `n`.
Matrix strided_rows(const Matrix& x, std::size_t n);

struct DiffusionBundle {
  DenoiserNet net;
  SpectrumCodec codec;
  std::vector<double> losses;
};
// Trains on the Train-split Synthetic spectra of `dataset`; conditioning uses
// the whitened leading coefficients of `fs.pca`.
DiffusionBundle train_diffusion_model(const SpectralDataset& dataset, const FeatureSpace& fs,
                                      const ExperimentConfig& cfg);

struct ClassifierRun {
  TrainResult trained;
  QuantizedModel quantized;
  Metrics float_test, int_test;
};
ClassifierRun train_classifier(const LabeledSet& train, const LabeledSet& val, const LabeledSet& test,
                               const ExperimentConfig& cfg, std::uint64_t seed);
// Seed of classifier replicate k under a root seed.
std::uint64_t replicate_seed(std::uint64_t root, std::size_t k);

// Baseline vs augmented+balanced arms over `classifier.seeds` replicates. The
// augmented arm is also compiled and run on simulated tiles.
struct ArmRow {
  std::string arm;  // baseline | augmented
  std::size_t replicate = 0;
  Metrics float_test, quant_test, soc_test;
  bool has_hardware = false;
};
struct ExperimentResult {
  std::vector<ArmRow> rows;
  ClassCounts original_counts{}, augmented_counts{};
  std::vector<std::string> warnings;
};
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void write_experiment_csv(std::ostream& os, const ExperimentResult& result);

// ---- commands ----------------------------------------------------------------------
// File names inside the output directory.
namespace artifacts {
inline constexpr const char* kDataset = "dataset.txt";
inline constexpr const char* kAugmented = "dataset_augmented.txt";
inline constexpr const char* kClassCounts = "class_counts.csv";
inline constexpr const char* kFeatures = "features.imcf";
inline constexpr const char* kDiffusion = "diffusion.imcf";
inline constexpr const char* kDiffusionLoss = "diffusion_loss.csv";
inline constexpr const char* kSnapshots = "snapshots.txt";
inline constexpr const char* kModel = "model.imcf";
inline constexpr const char* kLossCurves = "loss_curves.csv";
inline constexpr const char* kAccuracyCurves = "accuracy_curves.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kPlan = "plan.txt";
inline constexpr const char* kProgramReport = "program_report.csv";
inline constexpr const char* kEnvResults = "env_results.csv";
inline constexpr const char* kResiduals = "residuals.csv";
inline constexpr const char* kTraceSummary = "trace_summary.csv";
inline constexpr const char* kCdf = "device_cdf.csv";
inline constexpr const char* kCdfMedians = "device_cdf_medians.csv";
inline constexpr const char* kExperiment = "experiment.csv";
}  // namespace artifacts

// Each returns human-readable summary lines for stdout.
std::vector<std::string> cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out);
std::vector<std::string> cmd_train_diffusion(const ExperimentConfig& cfg, const std::filesystem::path& out);
std::vector<std::string> cmd_augment(const ExperimentConfig& cfg, const std::filesystem::path& out);
// Trains on the augmented dataset when `augmented` is set.
std::vector<std::string> cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, bool augmented);
std::vector<std::string> cmd_compile(const ExperimentConfig& cfg, const std::filesystem::path& out);
std::vector<std::string> cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out);
std::vector<std::string> cmd_device_cdf(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                        std::size_t cells = kTileCells);
// Renders SVG plots from whichever CSV artifacts exist; with `experiment`
// first runs the multi-seed baseline vs augmented comparison.
std::vector<std::string> cmd_report(const ExperimentConfig& cfg, const std::filesystem::path& out, bool experiment);

}  // namespace imc
