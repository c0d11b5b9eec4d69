#pragma once

// Conditional denoising diffusion for 1-D signals: noise schedule, forward
// process, the patch-token transformer noise predictor, the ancestral sampler
// and dataset augmentation.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "imc/checkpoint.hpp"
#include "imc/matrix.hpp"
#include "imc/optim.hpp"
#include "imc/pca.hpp"
#include "imc/spectra.hpp"
#include "imc/tensor.hpp"

namespace imc {

// Steps are 1-based: beta(1) .. beta(T).
class NoiseSchedule {
 public:
  static NoiseSchedule linear(std::size_t steps = 500, double beta_start = 1e-4, double beta_end = 0.02);
  explicit NoiseSchedule(std::vector<double> betas);

  std::size_t steps() const noexcept { return beta_.size(); }
  double beta(std::size_t t) const { return beta_.at(check(t)); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(check(t)); }

 private:
  std::size_t check(std::size_t t) const;
  std::vector<double> beta_, alpha_bar_;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
std::vector<double> q_sample(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                             const NoiseSchedule& schedule);
// t successive single steps x <- sqrt(alpha_s) x + sqrt(beta_s) z.
std::vector<double> iterate_forward(std::span<const double> x0, std::size_t t, const NoiseSchedule& schedule,
                                    Rng& rng);

struct DenoiserConfig {
  std::size_t signal_length = 256;
  std::size_t patch_size = 16;
  std::size_t token_dim = 64;
  std::size_t n_blocks = 4;
  std::size_t k_cond = 16;  // 0 disables cross-attention
  std::size_t ff_mult = 2;
  std::size_t cond_tokens = 8;  // context tokens built from the conditioning vector

  std::size_t tokens() const { return signal_length / patch_size; }
  void validate() const;
};

struct DenoiserBlock {
  Tensor ln1_g, ln1_b, self_q, self_k, self_v, self_o;
  Tensor ln2_g, ln2_b, cross_q, cross_k, cross_v, cross_o;
  Tensor ln3_g, ln3_b, ff1_w, ff1_b, ff2_w, ff2_b;
};

// Noise predictor eps(x_t, t, c). Signal patches become tokens; each block is
// pre-norm self-attention, cross-attention to the conditioning tokens and a
// feed-forward layer, each with a residual connection. The conditioning
// vector is projected to `cond_tokens` context tokens: token m is
// cond_proj_m c + cond_pos_m, so every token sees the whole vector.
class DenoiserNet {
 public:
  DenoiserNet() = default;
  DenoiserNet(const DenoiserConfig& config, Rng& rng);

  const DenoiserConfig& config() const noexcept { return config_; }

  // x_t [B, signal_length], one step per row, cond [B, k_cond] (ignored when
  // k_cond is 0). Returns predicted noise [B, signal_length].
  Tensor forward(const Tensor& x_t, std::span<const std::size_t> steps, const Tensor& cond) const;

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Zeroes every cross-attention projection.
  void zero_cross_attention();

 private:
  DenoiserConfig config_;
  Tensor in_w_, in_b_, pos_;
  Tensor time1_w_, time1_b_, time2_w_, time2_b_;
  Tensor cond_proj_, cond_pos_;
  std::vector<DenoiserBlock> blocks_;
  Tensor lnf_g_, lnf_b_, out_w_, out_b_;

  friend Checkpoint denoiser_to_checkpoint(const DenoiserNet&);
  friend DenoiserNet denoiser_from_checkpoint(const Checkpoint&);
};

// Sinusoidal embedding [steps.size(), dim].
Tensor timestep_embedding(std::span<const std::size_t> steps, std::size_t dim);

// Sum over coordinates of (eps - eps_hat)^2, mean over the batch; t uniform
// in [1, T] per example.
Tensor loss_conditional(const DenoiserNet& net, const Matrix& x0, const Matrix& cond, const NoiseSchedule& schedule,
                        Rng& rng);

// One reverse step from predicted noise: mu + sigma z with sigma^2 = beta_t
// and z = 0 at t = 1.
std::vector<double> p_sample_from_eps(std::span<const double> x_t, std::span<const double> eps_hat, std::size_t t,
                                      const NoiseSchedule& schedule, Rng& rng);
std::vector<double> p_sample_step(const DenoiserNet& net, std::span<const double> x_t, std::size_t t,
                                  std::span<const double> cond, const NoiseSchedule& schedule, Rng& rng);

struct SampleResult {
  Matrix final;                 // [B, signal_length]
  std::vector<std::size_t> snapshot_steps;  // t of each snapshot, descending
  std::vector<Matrix> snapshots;            // state x_t at each snapshot step
};

// Starts from N(0, I) and runs t = T .. 1. Snapshots hold x_T and the state
// after every `snapshot_every` steps. Row i draws from rng.split(first_index + i),
// so batching changes only floating-point rounding, not the noise drawn.
SampleResult sample(const DenoiserNet& net, const Matrix& cond, const NoiseSchedule& schedule, const Rng& rng,
                    std::size_t snapshot_every = 60, std::size_t first_index = 0);

struct DiffusionTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

// Returns the per-step training loss.
std::vector<double> train_denoiser(DenoiserNet& net, const Matrix& x0, const Matrix& cond,
                                   const NoiseSchedule& schedule, const DiffusionTrainConfig& config);

// Maps spectra to the denoiser's standardized space and back: box
// downsampling, per-coordinate centering, one global scale. decode()
// upsamples linearly and restores high-frequency detail as white noise of the
// training residual level.
struct SpectrumCodec {
  std::size_t spectrum_length = 1800;
  std::size_t signal_length = 256;
  std::size_t padded_length = 256;  // multiple of the patch size, edge padded
  std::vector<double> mean;         // [signal_length]
  double scale = 1.0;
  double residual_sigma = 0.0;

  static SpectrumCodec fit(const Matrix& spectra, std::size_t signal_length, std::size_t patch_size);
  std::vector<double> encode(std::span<const double> spectrum) const;
  std::vector<double> decode(std::span<const double> signal, Rng& rng) const;
};

// Conditioning: leading PCA coefficients divided by sqrt(explained variance).
std::vector<double> whitened_condition(const PcaModel& pca, std::span<const double> spectrum, std::size_t k_cond);

struct AugmentPolicy {
  enum class Kind { UniformPerSample, BalanceTo };
  Kind kind = Kind::BalanceTo;
  std::size_t per_sample_min = 3;
  std::size_t per_sample_max = 5;
  ClassCounts targets{2012, 1540, 852};
};

struct AugmentResult {
  SpectralDataset dataset;
  std::vector<std::string> warnings;
  std::vector<Snapshot> example_snapshots;  // denoising trace of the first generated sample
};

// References are the Train-split Synthetic spectra (every spectrum when the
// dataset is unsplit). Generated spectra are appended with provenance
// Generated, their reference's id and its split.
AugmentResult augment(const SpectralDataset& dataset, const DenoiserNet& net, const AugmentPolicy& policy,
                      const PcaModel& pca, const SpectrumCodec& codec, const NoiseSchedule& schedule,
                      std::uint64_t seed, std::size_t batch_size = 64);

Checkpoint denoiser_to_checkpoint(const DenoiserNet& net);
DenoiserNet denoiser_from_checkpoint(const Checkpoint& ck);
void put_codec(Checkpoint& ck, const SpectrumCodec& codec);
SpectrumCodec codec_from_checkpoint(const Checkpoint& ck);

}  // namespace imc
