#include "imc/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "imc/error.hpp"

namespace imc {

// ---- schedule and forward process -------------------------------------------------

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) fail(ErrorKind::Contract, "NoiseSchedule: at least one step required");
  std::vector<double> b(steps);
  for (std::size_t i = 0; i < steps; ++i)
    b[i] = steps == 1 ? beta_start
                      : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(steps - 1);
  return NoiseSchedule(std::move(b));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) fail(ErrorKind::Contract, "NoiseSchedule: empty beta vector");
  double prod = 1.0;
  for (double b : beta_) {
    if (!(b >= 0.0 && b < 1.0)) fail(ErrorKind::Contract, "NoiseSchedule: beta outside [0, 1)");
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

std::size_t NoiseSchedule::check(std::size_t t) const {
  if (t < 1 || t > beta_.size())
    fail(ErrorKind::Index, "diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(beta_.size()) + "]");
  return t - 1;
}

std::vector<double> q_sample(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                             const NoiseSchedule& schedule) {
  if (eps.size() != x0.size()) fail(ErrorKind::Dimension, "q_sample: noise length differs from signal");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

std::vector<double> iterate_forward(std::span<const double> x0, std::size_t t, const NoiseSchedule& schedule,
                                    Rng& rng) {
  if (t < 1 || t > schedule.steps()) schedule.beta(t);  // throws the range error
  std::vector<double> x(x0.begin(), x0.end());
  for (std::size_t s = 1; s <= t; ++s) {
    const double b = schedule.beta(s), a = std::sqrt(1.0 - b), sd = std::sqrt(b);
    for (auto& v : x) v = a * v + sd * rng.normal();
  }
  return x;
}

// ---- denoiser ------------------------------------------------------------------------

void DenoiserConfig::validate() const {
  if (patch_size == 0 || token_dim == 0 || ff_mult == 0)
    fail(ErrorKind::Contract, "DenoiserConfig: patch_size, token_dim and ff_mult must be positive");
  if (k_cond > 0 && cond_tokens == 0) fail(ErrorKind::Contract, "DenoiserConfig: cond_tokens must be positive");
  if (signal_length < patch_size || signal_length % patch_size)
    fail(ErrorKind::Contract, "DenoiserConfig: signal_length " + std::to_string(signal_length) +
                                  " must be a positive multiple of patch_size " + std::to_string(patch_size));
}

namespace {

Tensor randn(Shape shape, double sd, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor dense(std::size_t out, std::size_t in, Rng& rng, double gain = 1.0) {
  return randn({out, in}, gain / std::sqrt(static_cast<double>(in)), rng);
}

Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0, true); }
Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }

}  // namespace

DenoiserNet::DenoiserNet(const DenoiserConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.token_dim, p = config_.patch_size, n = config_.tokens(), k = config_.k_cond;
  const std::size_t h = config_.ff_mult * d;
  in_w_ = dense(d, p, rng);
  in_b_ = zeros(d);
  pos_ = randn({n, d}, 0.1, rng);
  time1_w_ = dense(d, d, rng);
  time1_b_ = zeros(d);
  time2_w_ = dense(d, d, rng);
  time2_b_ = zeros(d);
  if (k > 0) {
    const std::size_t m = config_.cond_tokens;
    cond_proj_ = dense(m * d, k, rng);
    cond_pos_ = randn({m * d}, 0.1, rng);
  }
  for (std::size_t b = 0; b < config_.n_blocks; ++b) {
    DenoiserBlock blk;
    blk.ln1_g = ones(d), blk.ln1_b = zeros(d);
    blk.self_q = dense(d, d, rng), blk.self_k = dense(d, d, rng), blk.self_v = dense(d, d, rng);
    blk.self_o = dense(d, d, rng, 0.5);
    blk.ln2_g = ones(d), blk.ln2_b = zeros(d);
    blk.cross_q = dense(d, d, rng), blk.cross_k = dense(d, d, rng), blk.cross_v = dense(d, d, rng);
    blk.cross_o = dense(d, d, rng, 0.5);
    blk.ln3_g = ones(d), blk.ln3_b = zeros(d);
    blk.ff1_w = dense(h, d, rng), blk.ff1_b = zeros(h);
    blk.ff2_w = dense(d, h, rng, 0.5), blk.ff2_b = zeros(d);
    blocks_.push_back(std::move(blk));
  }
  lnf_g_ = ones(d);
  lnf_b_ = zeros(d);
  out_w_ = dense(p, d, rng, 0.1);
  out_b_ = zeros(p);
}

Tensor timestep_embedding(std::span<const std::size_t> steps, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(steps.size() * dim, 0.0);
  for (std::size_t r = 0; r < steps.size(); ++r)
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double arg = static_cast<double>(steps[r]) * freq;
      out[r * dim + i] = std::sin(arg);
      out[r * dim + half + i] = std::cos(arg);
    }
  return Tensor({steps.size(), dim}, std::move(out));
}

Tensor DenoiserNet::forward(const Tensor& x_t, std::span<const std::size_t> steps, const Tensor& cond) const {
  const std::size_t B = x_t.rows(), L = config_.signal_length, p = config_.patch_size, n = config_.tokens();
  const std::size_t k = config_.k_cond, d = config_.token_dim;
  if (x_t.numel() != B * L) fail(ErrorKind::Dimension, "denoiser: expected signals of length " + std::to_string(L));
  if (steps.size() != B) fail(ErrorKind::Dimension, "denoiser: one step per signal required");
  if (k > 0 && (!cond.defined() || cond.numel() != B * k))
    fail(ErrorKind::Dimension, "denoiser: expected " + std::to_string(k) + " conditioning values per signal");

  Tensor h = linear(reshape(x_t, {B * n, p}), in_w_, in_b_);
  h = add(h, tile_rows(pos_, B));
  Tensor te = linear(silu(linear(timestep_embedding(steps, d), time1_w_, time1_b_)), time2_w_, time2_b_);
  h = add(h, repeat_rows(te, n));

  Tensor ctx;
  if (k > 0) {
    ctx = reshape(linear(reshape(cond, {B, k}), cond_proj_, cond_pos_), {B * config_.cond_tokens, d});
  }
  const Tensor none;
  for (const auto& blk : blocks_) {
    Tensor a = layer_norm(h, blk.ln1_g, blk.ln1_b);
    Tensor att = grouped_attention(linear(a, blk.self_q, none), linear(a, blk.self_k, none),
                                   linear(a, blk.self_v, none), B);
    h = add(h, linear(att, blk.self_o, none));
    if (k > 0) {
      a = layer_norm(h, blk.ln2_g, blk.ln2_b);
      att = grouped_attention(linear(a, blk.cross_q, none), linear(ctx, blk.cross_k, none),
                              linear(ctx, blk.cross_v, none), B);
      h = add(h, linear(att, blk.cross_o, none));
    }
    a = layer_norm(h, blk.ln3_g, blk.ln3_b);
    h = add(h, linear(silu(linear(a, blk.ff1_w, blk.ff1_b)), blk.ff2_w, blk.ff2_b));
  }
  Tensor out = linear(layer_norm(h, lnf_g_, lnf_b_), out_w_, out_b_);
  return reshape(out, {B, L});
}

std::vector<std::pair<std::string, Tensor>> DenoiserNet::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"in_w", in_w_}, {"in_b", in_b_}, {"pos", pos_}, {"time1_w", time1_w_},
      {"time1_b", time1_b_}, {"time2_w", time2_w_}, {"time2_b", time2_b_}};
  if (config_.k_cond > 0) {
    out.emplace_back("cond_proj", cond_proj_);
    out.emplace_back("cond_pos", cond_pos_);
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& k = blocks_[b];
    const std::string p = "block" + std::to_string(b) + ".";
    const std::pair<const char*, const Tensor*> items[] = {
        {"ln1_g", &k.ln1_g}, {"ln1_b", &k.ln1_b}, {"self_q", &k.self_q}, {"self_k", &k.self_k},
        {"self_v", &k.self_v}, {"self_o", &k.self_o}, {"ln2_g", &k.ln2_g}, {"ln2_b", &k.ln2_b},
        {"cross_q", &k.cross_q}, {"cross_k", &k.cross_k}, {"cross_v", &k.cross_v}, {"cross_o", &k.cross_o},
        {"ln3_g", &k.ln3_g}, {"ln3_b", &k.ln3_b}, {"ff1_w", &k.ff1_w}, {"ff1_b", &k.ff1_b},
        {"ff2_w", &k.ff2_w}, {"ff2_b", &k.ff2_b}};
    for (const auto& [name, t] : items) {
      // Cross-attention parameters are dead weight without conditioning.
      if (config_.k_cond == 0 && (std::string_view(name).starts_with("cross") || std::string_view(name).starts_with("ln2")))
        continue;
      out.emplace_back(p + name, *t);
    }
  }
  out.emplace_back("lnf_g", lnf_g_);
  out.emplace_back("lnf_b", lnf_b_);
  out.emplace_back("out_w", out_w_);
  out.emplace_back("out_b", out_b_);
  return out;
}

std::vector<Tensor> DenoiserNet::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void DenoiserNet::zero_cross_attention() {
  for (auto& blk : blocks_)
    for (Tensor* t : {&blk.cross_q, &blk.cross_k, &blk.cross_v, &blk.cross_o})
      std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
}

// ---- objective and sampler -----------------------------------------------------------

Tensor loss_conditional(const DenoiserNet& net, const Matrix& x0, const Matrix& cond, const NoiseSchedule& schedule,
                        Rng& rng) {
  const std::size_t B = x0.rows, L = x0.cols;
  if (B == 0) fail(ErrorKind::Data, "loss_conditional: empty batch");
  std::vector<std::size_t> steps(B);
  std::vector<double> xt(B * L), eps(B * L);
  for (std::size_t r = 0; r < B; ++r) {
    steps[r] = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(schedule.steps())));
    for (std::size_t j = 0; j < L; ++j) eps[r * L + j] = rng.normal();
    const auto noisy = q_sample(x0.row(r), steps[r], std::span<const double>(eps.data() + r * L, L), schedule);
    std::copy(noisy.begin(), noisy.end(), xt.begin() + static_cast<std::ptrdiff_t>(r * L));
  }
  const Tensor c = cond.rows ? Tensor({cond.rows, cond.cols}, cond.data) : Tensor();
  const Tensor pred = net.forward(Tensor({B, L}, std::move(xt)), steps, c);
  return scale(sum_squares(sub(pred, Tensor({B, L}, std::move(eps)))), 1.0 / static_cast<double>(B));
}

std::vector<double> p_sample_from_eps(std::span<const double> x_t, std::span<const double> eps_hat, std::size_t t,
                                      const NoiseSchedule& schedule, Rng& rng) {
  if (eps_hat.size() != x_t.size()) fail(ErrorKind::Dimension, "p_sample: noise length differs from signal");
  const double b = schedule.beta(t), a = 1.0 - b, ab = schedule.alpha_bar(t);
  const double coef = b / std::sqrt(1.0 - ab), inv = 1.0 / std::sqrt(a), sd = std::sqrt(b);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv * (x_t[i] - coef * eps_hat[i]);
    if (t > 1) out[i] += sd * rng.normal();
  }
  return out;
}

std::vector<double> p_sample_step(const DenoiserNet& net, std::span<const double> x_t, std::size_t t,
                                  std::span<const double> cond, const NoiseSchedule& schedule, Rng& rng) {
  schedule.beta(t);
  const std::size_t L = x_t.size();
  const std::size_t steps[1] = {t};
  const Tensor c = cond.empty() ? Tensor() : Tensor({1, cond.size()}, {cond.begin(), cond.end()});
  const Tensor eps = net.forward(Tensor({1, L}, {x_t.begin(), x_t.end()}), steps, c);
  return p_sample_from_eps(x_t, eps.data(), t, schedule, rng);
}

SampleResult sample(const DenoiserNet& net, const Matrix& cond, const NoiseSchedule& schedule, const Rng& rng,
                    std::size_t snapshot_every, std::size_t first_index) {
  const std::size_t B = cond.rows, L = net.config().signal_length, T = schedule.steps();
  if (B == 0) return {Matrix(0, L), {}, {}};
  std::vector<Rng> rngs;
  rngs.reserve(B);
  for (std::size_t r = 0; r < B; ++r) rngs.push_back(rng.split(first_index + r));

  Matrix x(B, L);
  for (std::size_t r = 0; r < B; ++r)
    for (auto& v : x.row(r)) v = rngs[r].normal();

  SampleResult res;
  if (snapshot_every > 0) {
    res.snapshot_steps.push_back(T);
    res.snapshots.push_back(x);
  }
  const Tensor c = net.config().k_cond ? Tensor({B, cond.cols}, cond.data) : Tensor();
  std::vector<std::size_t> steps(B);
  for (std::size_t t = T; t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    const Tensor eps = net.forward(Tensor({B, L}, x.data), steps, c);
    for (std::size_t r = 0; r < B; ++r) {
      const auto next = p_sample_from_eps(x.row(r), eps.data().subspan(r * L, L), t, schedule, rngs[r]);
      std::copy(next.begin(), next.end(), x.row(r).begin());
    }
    const std::size_t now = t - 1;
    if (snapshot_every > 0 && now > 0 && (T - now) % snapshot_every == 0) {
      res.snapshot_steps.push_back(now);
      res.snapshots.push_back(x);
    }
  }
  res.final = std::move(x);
  return res;
}

std::vector<double> train_denoiser(DenoiserNet& net, const Matrix& x0, const Matrix& cond,
                                   const NoiseSchedule& schedule, const DiffusionTrainConfig& cfg) {
  const std::size_t n = x0.rows, L = x0.cols, k = net.config().k_cond;
  if (n == 0) fail(ErrorKind::Data, "train_denoiser: no training signals");
  if (L != net.config().signal_length) fail(ErrorKind::Dimension, "train_denoiser: signal length mismatch");
  if (k > 0 && (cond.rows != n || cond.cols != k)) fail(ErrorKind::Dimension, "train_denoiser: conditioning shape");
  auto params = net.parameters();
  Adam opt(params, cfg.adam);
  const Rng root = Rng(cfg.seed).split(streams::kDiffusion);
  std::vector<double> curve;
  curve.reserve(cfg.steps);
  const std::size_t bs = std::min(cfg.batch_size, n);
  Matrix xb(bs, L), cb(k > 0 ? bs : 0, k);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    Rng rng = root.split(step);
    for (std::size_t r = 0; r < bs; ++r) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
      std::copy_n(x0.row(i).begin(), L, xb.row(r).begin());
      if (k > 0) std::copy_n(cond.row(i).begin(), k, cb.row(r).begin());
    }
    // Cosine decay to a tenth of the base rate.
    const double progress = static_cast<double>(step - 1) / static_cast<double>(std::max<std::size_t>(1, cfg.steps));
    opt.set_lr(cfg.adam.lr * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress))));
    double value = 0.0;
    {
      Tape tape;
      TapeScope scope(tape);
      Tensor l = loss_conditional(net, xb, cb, schedule, rng);
      value = l.item();
      if (!std::isfinite(value))
        fail(ErrorKind::Divergence, "denoiser training diverged at step " + std::to_string(step));
      backward(l);
    }
    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (auto& p : params)
        if (p.has_grad())
          for (double g : p.grad()) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm)
        for (auto& p : params)
          if (p.has_grad())
            for (auto& g : p.mutable_grad()) g *= cfg.clip_norm / norm;
    }
    opt.step();
    opt.zero_grad();
    curve.push_back(value);
  }
  return curve;
}

// ---- spectrum codec ---------------------------------------------------------------

SpectrumCodec SpectrumCodec::fit(const Matrix& spectra, std::size_t signal_length, std::size_t patch_size) {
  if (spectra.rows == 0) fail(ErrorKind::Data, "SpectrumCodec: no spectra");
  if (signal_length < 2 || patch_size == 0) fail(ErrorKind::Contract, "SpectrumCodec: bad signal length");
  SpectrumCodec c;
  c.spectrum_length = spectra.cols;
  c.signal_length = signal_length;
  c.padded_length = (signal_length + patch_size - 1) / patch_size * patch_size;
  c.mean.assign(signal_length, 0.0);
  Matrix down(spectra.rows, signal_length);
  double resid_sq = 0.0;
  for (std::size_t r = 0; r < spectra.rows; ++r) {
    const auto d = downsample_box(spectra.row(r), signal_length);
    std::copy(d.begin(), d.end(), down.row(r).begin());
    const auto up = resample_linear(d, spectra.cols);
    for (std::size_t j = 0; j < spectra.cols; ++j) resid_sq += (spectra(r, j) - up[j]) * (spectra(r, j) - up[j]);
    for (std::size_t j = 0; j < signal_length; ++j) c.mean[j] += d[j];
  }
  for (auto& m : c.mean) m /= static_cast<double>(spectra.rows);
  double var = 0.0;
  for (std::size_t r = 0; r < spectra.rows; ++r)
    for (std::size_t j = 0; j < signal_length; ++j) var += (down(r, j) - c.mean[j]) * (down(r, j) - c.mean[j]);
  var /= static_cast<double>(spectra.rows * signal_length);
  c.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  c.residual_sigma = std::sqrt(resid_sq / static_cast<double>(spectra.rows * spectra.cols));
  return c;
}

std::vector<double> SpectrumCodec::encode(std::span<const double> spectrum) const {
  if (spectrum.size() != spectrum_length) fail(ErrorKind::Dimension, "SpectrumCodec: spectrum length mismatch");
  auto d = downsample_box(spectrum, signal_length);
  for (std::size_t j = 0; j < signal_length; ++j) d[j] = (d[j] - mean[j]) / scale;
  d.resize(padded_length, d.back());
  return d;
}

std::vector<double> SpectrumCodec::decode(std::span<const double> signal, Rng& rng) const {
  if (signal.size() < signal_length) fail(ErrorKind::Dimension, "SpectrumCodec: signal too short");
  std::vector<double> d(signal_length);
  for (std::size_t j = 0; j < signal_length; ++j) d[j] = signal[j] * scale + mean[j];
  auto up = resample_linear(d, spectrum_length);
  for (auto& v : up) v = std::max(0.0, v + residual_sigma * rng.normal());
  return up;
}

std::vector<double> whitened_condition(const PcaModel& pca, std::span<const double> spectrum, std::size_t k_cond) {
  auto c = conditioning_vector(pca, spectrum, k_cond);
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double ev = pca.explained_variance[j];
    if (ev > 0.0) c[j] /= std::sqrt(ev);
  }
  return c;
}

// ---- augmentation -------------------------------------------------------------------

AugmentResult augment(const SpectralDataset& dataset, const DenoiserNet& net, const AugmentPolicy& policy,
                      const PcaModel& pca, const SpectrumCodec& codec, const NoiseSchedule& schedule,
                      std::uint64_t seed, std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorKind::Contract, "augment: batch_size must be positive");
  if (codec.padded_length != net.config().signal_length)
    fail(ErrorKind::Dimension, "augment: codec and denoiser disagree on signal length");
  AugmentResult res{dataset, {}, {}};
  const bool has_split = dataset.assignment.size() == dataset.size();
  const Rng root = Rng(seed).split(streams::kSample);

  std::array<std::vector<std::size_t>, kNumClasses> refs;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.spectra[i];
    if (s.provenance != Provenance::Synthetic) continue;
    if (has_split && dataset.assignment[i] != Split::Train) continue;
    refs[static_cast<int>(s.label)].push_back(i);
  }

  // One job per generated spectrum: its reference id.
  std::vector<std::size_t> jobs;
  const auto counts = dataset.class_counts();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& r = refs[c];
    const std::string name(label_name(static_cast<Label>(c)));
    if (policy.kind == AugmentPolicy::Kind::BalanceTo) {
      if (policy.targets[c] < counts[c]) {
        res.warnings.push_back("class " + name + ": target " + std::to_string(policy.targets[c]) + " below current " +
                               std::to_string(counts[c]) + "; left unchanged");
        continue;
      }
      const std::size_t need = policy.targets[c] - counts[c];
      if (need == 0) continue;
      if (r.empty()) fail(ErrorKind::Data, "augment: class " + name + " has no reference spectra");
      for (std::size_t k = 0; k < r.size(); ++k) {
        const std::size_t share = need / r.size() + (k < need % r.size() ? 1 : 0);
        jobs.insert(jobs.end(), share, r[k]);
      }
    } else {
      if (policy.per_sample_min > policy.per_sample_max) fail(ErrorKind::Contract, "augment: per-sample range inverted");
      for (auto id : r) {
        Rng pick = root.split(id).split(1);
        const auto share = static_cast<std::size_t>(pick.uniform_int(static_cast<std::int64_t>(policy.per_sample_min),
                                                                     static_cast<std::int64_t>(policy.per_sample_max)));
        jobs.insert(jobs.end(), share, id);
      }
    }
  }

  const std::size_t k = net.config().k_cond;
  const Rng decode_root = Rng(seed).split(streams::kSample + 1000);
  for (std::size_t start = 0; start < jobs.size(); start += batch_size) {
    const std::size_t bs = std::min(batch_size, jobs.size() - start);
    Matrix cond(bs, k);
    for (std::size_t r = 0; r < bs; ++r) {
      const auto c = whitened_condition(pca, dataset.spectra[jobs[start + r]].intensities, k);
      std::copy(c.begin(), c.end(), cond.row(r).begin());
    }
    const auto out = sample(net, cond, schedule, root, start == 0 ? 60 : 0, start);
    if (start == 0) {
      for (std::size_t s = 0; s < out.snapshots.size(); ++s) {
        std::vector<double> sig(codec.signal_length);
        for (std::size_t j = 0; j < codec.signal_length; ++j)
          sig[j] = out.snapshots[s](0, j) * codec.scale + codec.mean[j];
        res.example_snapshots.push_back({out.snapshot_steps[s], {std::move(sig)}});
      }
      std::vector<double> fin(codec.signal_length);
      for (std::size_t j = 0; j < codec.signal_length; ++j) fin[j] = out.final(0, j) * codec.scale + codec.mean[j];
      res.example_snapshots.push_back({0, {std::move(fin)}});
    }
    for (std::size_t r = 0; r < bs; ++r) {
      const std::size_t ref = jobs[start + r];
      Rng drng = decode_root.split(start + r);
      Spectrum s{codec.decode(out.final.row(r), drng), dataset.spectra[ref].label, Provenance::Generated, ref};
      res.dataset.spectra.push_back(std::move(s));
      if (has_split) res.dataset.assignment.push_back(dataset.assignment[ref]);
    }
  }
  return res;
}

// ---- checkpoints --------------------------------------------------------------------

Checkpoint denoiser_to_checkpoint(const DenoiserNet& net) {
  Checkpoint ck;
  ck.put_string("kind", "denoiser");
  const auto& c = net.config_;
  const std::int64_t cfg[7] = {static_cast<std::int64_t>(c.signal_length), static_cast<std::int64_t>(c.patch_size),
                               static_cast<std::int64_t>(c.token_dim),     static_cast<std::int64_t>(c.n_blocks),
                               static_cast<std::int64_t>(c.k_cond),        static_cast<std::int64_t>(c.ff_mult),
                               static_cast<std::int64_t>(c.cond_tokens)};
  ck.put_i64("config", {7}, cfg);
  for (const auto& [name, t] : net.named_parameters()) ck.put(name, t);
  return ck;
}

DenoiserNet denoiser_from_checkpoint(const Checkpoint& ck) {
  if (!ck.has("kind") || ck.string("kind") != "denoiser") fail(ErrorKind::Data, "checkpoint is not a denoiser");
  const auto cfg = ck.i64("config");
  if (cfg.size() != 7) fail(ErrorKind::Data, "denoiser checkpoint: bad config");
  DenoiserConfig c;
  c.signal_length = static_cast<std::size_t>(cfg[0]);
  c.patch_size = static_cast<std::size_t>(cfg[1]);
  c.token_dim = static_cast<std::size_t>(cfg[2]);
  c.n_blocks = static_cast<std::size_t>(cfg[3]);
  c.k_cond = static_cast<std::size_t>(cfg[4]);
  c.ff_mult = static_cast<std::size_t>(cfg[5]);
  c.cond_tokens = static_cast<std::size_t>(cfg[6]);
  Rng dummy(0);
  DenoiserNet net(c, dummy);
  for (auto& [name, t] : net.named_parameters()) {
    const auto v = ck.f64(name);
    if (v.size() != t.numel()) fail(ErrorKind::Data, "denoiser checkpoint: '" + name + "' has the wrong size");
    auto dst = t.mutable_data();
    std::copy(v.begin(), v.end(), dst.begin());
  }
  return net;
}

void put_codec(Checkpoint& ck, const SpectrumCodec& codec) {
  const std::int64_t dims[3] = {static_cast<std::int64_t>(codec.spectrum_length),
                                static_cast<std::int64_t>(codec.signal_length),
                                static_cast<std::int64_t>(codec.padded_length)};
  ck.put_i64("codec.dims", {3}, dims);
  ck.put_f64("codec.mean", {codec.mean.size()}, codec.mean);
  ck.put_scalar("codec.scale", codec.scale);
  ck.put_scalar("codec.residual_sigma", codec.residual_sigma);
}

SpectrumCodec codec_from_checkpoint(const Checkpoint& ck) {
  SpectrumCodec c;
  const auto dims = ck.i64("codec.dims");
  if (dims.size() != 3) fail(ErrorKind::Data, "codec: bad dims");
  c.spectrum_length = static_cast<std::size_t>(dims[0]);
  c.signal_length = static_cast<std::size_t>(dims[1]);
  c.padded_length = static_cast<std::size_t>(dims[2]);
  c.mean = ck.f64("codec.mean");
  c.scale = ck.scalar("codec.scale");
  c.residual_sigma = ck.scalar("codec.residual_sigma");
  if (c.mean.size() != c.signal_length) fail(ErrorKind::Data, "codec: mean length mismatch");
  return c;
}

}  // namespace imc
