#pragma once

// Experiment configuration: an INI file with sections [data] [pca]
// [classifier] [diffusion] [device] [compile] [run]. Missing keys keep their
// defaults; unknown sections or keys are usage errors.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "imc/classifier.hpp"
#include "imc/compiler.hpp"
#include "imc/crossbar.hpp"
#include "imc/diffusion.hpp"
#include "imc/spectra.hpp"

namespace imc {

struct DataSection {
  ClassCounts counts{431, 385, 212};
  GeneratorParams generator;
  std::size_t test_count = 514;  // held-out originals; 0 uses the 7:2:1 ratio rule
  double train_ratio = 7.0;
  double val_ratio = 2.0;
};

struct PcaSection {
  std::size_t components = 128;
};

struct ClassifierSection {
  std::string hidden = "240,96,48";
  TrainConfig train;
  std::size_t seeds = 5;  // classifier seeds per experiment arm
};

struct DiffusionSection {
  std::size_t steps = 500;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  DenoiserConfig net;
  DiffusionTrainConfig train;
  std::size_t snapshot_every = 60;
  std::string policy = "balance";  // balance | uniform
  AugmentPolicy augment;
};

struct RunSection {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool noise = true;
};

struct ExperimentConfig {
  DataSection data;
  PcaSection pca;
  ClassifierSection classifier;
  DiffusionSection diffusion;
  DeviceParams device;
  CompileConfig compile;
  RunSection run;

  std::vector<std::size_t> mlp_dims() const;
  NoiseSchedule schedule() const;
  AugmentPolicy augment_policy() const;
  void validate() const;
};

ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every key, in canonical order; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace imc
