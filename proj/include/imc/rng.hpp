#pragma once

#include <cstdint>
#include <random>

namespace imc {

// Deterministic generator with counter-style stream derivation. A child
// stream depends only on (seed, stream id), never on how many numbers the
// parent has drawn, so work split across threads stays reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Fixed stream ids for the per-subsystem split of the root seed.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kDiffusion = 3;
inline constexpr std::uint64_t kDevice = 4;
inline constexpr std::uint64_t kSplit = 5;
inline constexpr std::uint64_t kTrain = 6;
inline constexpr std::uint64_t kSample = 7;
}  // namespace streams

}  // namespace imc
