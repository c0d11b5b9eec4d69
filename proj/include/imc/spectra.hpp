#pragma once

// Labeled 1-D spectra: synthetic generation, stratified splits and the
// plain-text dataset format.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imc/matrix.hpp"

namespace imc {

enum class Label : int { Healthy = 0, HeartAttack = 1, LiverCancer = 2 };
inline constexpr int kNumClasses = 3;
using ClassCounts = std::array<std::size_t, kNumClasses>;

enum class Provenance { Synthetic, Generated };
enum class Split : std::uint8_t { Train, Val, Test };

std::string_view label_name(Label l);
Label parse_label(std::string_view s);
std::string_view provenance_name(Provenance p);

struct Spectrum {
  std::vector<double> intensities;
  Label label = Label::Healthy;
  Provenance provenance = Provenance::Synthetic;
  std::optional<std::size_t> source_id;  // reference spectrum for generated samples
};

// A spectrum's id is its index in `spectra`.
struct SpectralDataset {
  std::size_t length = 1800;
  std::vector<Spectrum> spectra;
  std::vector<Split> assignment;  // empty until split() runs
  std::uint64_t split_seed = 0;

  std::size_t size() const noexcept { return spectra.size(); }
  ClassCounts class_counts() const;
  ClassCounts class_counts(Split s) const;
  std::vector<std::size_t> ids(Split s) const;
  Matrix matrix(const std::vector<std::size_t>& ids) const;
  std::vector<int> labels(const std::vector<std::size_t>& ids) const;
};

// Nominal axis is 400-1800 cm^-1 over `length` points; only indices matter.
struct GeneratorParams {
  std::size_t length = 1800;
  double noise_sigma = 0.04;
  double peak_width_min = 10.0;  // Gaussian sigma / Lorentzian half-width, in points
  double peak_width_max = 24.0;
  double position_jitter = 4.0;
  double signature_amp_min = 0.35;  // own-class signature peaks
  double signature_amp_max = 1.25;
  double cross_amp_max = 1.2;   // other classes' signature positions
  double distractor_amp_max = 0.9;
  double gain_log_sigma = 0.25;  // per-spectrum multiplicative intensity spread
  double baseline_level = 1.0;
};

// Three fixed signature peak positions per class for the given length.
std::array<std::array<std::size_t, 3>, kNumClasses> signature_positions(std::size_t length);

SpectralDataset generate_synthetic(const ClassCounts& counts, const GeneratorParams& params, std::uint64_t seed);

enum class SplitMode { Plain, AugmentedTestRealOnly };

struct SplitOptions {
  std::array<double, 3> ratios{7.0, 2.0, 1.0};  // train : val : test
  SplitMode mode = SplitMode::Plain;
  // Number of test spectra; 0 applies the ratio rule. In augmented mode the
  // test set is drawn from Synthetic spectra only.
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
};

// Stratified assignment written into `dataset.assignment`. Returns warnings
// for classes too small to fill every split.
std::vector<std::string> split(SpectralDataset& dataset, const SplitOptions& options);

// Largest-remainder apportionment of `total` across `weights`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights);

void write_dataset(std::ostream& os, const SpectralDataset& ds);
void write_dataset(const std::filesystem::path& path, const SpectralDataset& ds);
SpectralDataset read_dataset(std::istream& is);
SpectralDataset read_dataset(const std::filesystem::path& path);

// Snapshot series: one `# snapshots t=<t>` block per snapshot.
struct Snapshot {
  std::size_t t = 0;
  std::vector<std::vector<double>> signals;
};
void write_snapshots(std::ostream& os, const std::vector<Snapshot>& snaps, Label label);

// Shortest round-trip decimal text for a double.
std::string format_double(double v);

// Linear-interpolation resampling between grid lengths, endpoints aligned.
std::vector<double> resample_linear(std::span<const double> x, std::size_t out_len);
// Box-filtered downsampling (anti-aliased), endpoints aligned.
std::vector<double> downsample_box(std::span<const double> x, std::size_t out_len);

}  // namespace imc
