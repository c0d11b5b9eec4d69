#include "imc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "imc/error.hpp"

namespace imc {

namespace {

// Calls v(section, key, field) for every configurable field in canonical
// order. Works for both const and mutable configs.
template <class C, class V>
void visit_fields(C& c, V&& v) {
  v("data", "healthy", c.data.counts[0]);
  v("data", "heart_attack", c.data.counts[1]);
  v("data", "liver_cancer", c.data.counts[2]);
  v("data", "length", c.data.generator.length);
  v("data", "noise_sigma", c.data.generator.noise_sigma);
  v("data", "peak_width_min", c.data.generator.peak_width_min);
  v("data", "peak_width_max", c.data.generator.peak_width_max);
  v("data", "position_jitter", c.data.generator.position_jitter);
  v("data", "signature_amp_min", c.data.generator.signature_amp_min);
  v("data", "signature_amp_max", c.data.generator.signature_amp_max);
  v("data", "cross_amp_max", c.data.generator.cross_amp_max);
  v("data", "distractor_amp_max", c.data.generator.distractor_amp_max);
  v("data", "gain_log_sigma", c.data.generator.gain_log_sigma);
  v("data", "baseline_level", c.data.generator.baseline_level);
  v("data", "test_count", c.data.test_count);
  v("data", "train_ratio", c.data.train_ratio);
  v("data", "val_ratio", c.data.val_ratio);

  v("pca", "components", c.pca.components);

  v("classifier", "hidden", c.classifier.hidden);
  v("classifier", "lambda", c.classifier.train.lambda);
  v("classifier", "epochs", c.classifier.train.epochs);
  v("classifier", "batch_size", c.classifier.train.batch_size);
  v("classifier", "lr", c.classifier.train.adam.lr);
  v("classifier", "qat", c.classifier.train.qat_enabled);
  v("classifier", "qat_warmup_epochs", c.classifier.train.qat_warmup_epochs);
  v("classifier", "seeds", c.classifier.seeds);

  v("diffusion", "steps", c.diffusion.steps);
  v("diffusion", "beta_start", c.diffusion.beta_start);
  v("diffusion", "beta_end", c.diffusion.beta_end);
  v("diffusion", "signal_length", c.diffusion.net.signal_length);
  v("diffusion", "patch_size", c.diffusion.net.patch_size);
  v("diffusion", "token_dim", c.diffusion.net.token_dim);
  v("diffusion", "blocks", c.diffusion.net.n_blocks);
  v("diffusion", "k_cond", c.diffusion.net.k_cond);
  v("diffusion", "ff_mult", c.diffusion.net.ff_mult);
  v("diffusion", "cond_tokens", c.diffusion.net.cond_tokens);
  v("diffusion", "train_steps", c.diffusion.train.steps);
  v("diffusion", "batch_size", c.diffusion.train.batch_size);
  v("diffusion", "lr", c.diffusion.train.adam.lr);
  v("diffusion", "clip_norm", c.diffusion.train.clip_norm);
  v("diffusion", "snapshot_every", c.diffusion.snapshot_every);
  v("diffusion", "policy", c.diffusion.policy);
  v("diffusion", "per_sample_min", c.diffusion.augment.per_sample_min);
  v("diffusion", "per_sample_max", c.diffusion.augment.per_sample_max);
  v("diffusion", "target_healthy", c.diffusion.augment.targets[0]);
  v("diffusion", "target_heart_attack", c.diffusion.augment.targets[1]);
  v("diffusion", "target_liver_cancer", c.diffusion.augment.targets[2]);

  v("device", "program_noise_sigma", c.device.program_noise_sigma);
  v("device", "read_noise_sigma", c.device.read_noise_sigma);
  v("device", "stuck_off_rate", c.device.stuck_off_rate);
  v("device", "stuck_on_rate", c.device.stuck_on_rate);
  v("device", "pulse_step_fraction", c.device.pulse_step_fraction);
  v("device", "max_program_iters", c.device.max_program_iters);
  v("device", "rmse_criterion", c.device.rmse_criterion);

  v("compile", "npu_count", c.compile.npu_count);
  v("compile", "g_lo", c.compile.encoding.g_lo);
  v("compile", "g_hi", c.compile.encoding.g_hi);
  v("compile", "max_clamp_fraction", c.compile.max_clamp_fraction);
  v("compile", "fail_clamp_fraction", c.compile.fail_clamp_fraction);
  v("compile", "max_shift", c.compile.max_shift);
  v("compile", "calibration_samples", c.compile.calibration_samples);

  v("run", "seed", c.run.seed);
  v("run", "threads", c.run.threads);
  v("run", "noise", c.run.noise);
}

template <class T>
std::string to_text(const T& value) {
  if constexpr (std::is_same_v<T, bool>) return value ? "true" : "false";
  else if constexpr (std::is_same_v<T, std::string>) return value;
  else if constexpr (std::is_floating_point_v<T>) return format_double(value);
  else return std::to_string(value);
}

template <class T>
void from_text(const std::string& section, const std::string& key, const std::string& text, T& out) {
  auto bad = [&] { fail(ErrorKind::Usage, "config [" + section + "] " + key + ": cannot parse '" + text + "'"); };
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "on" || text == "1") out = true;
    else if (text == "false" || text == "off" || text == "0") out = false;
    else bad();
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = text;
  } else {
    T v{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) bad();
    out = v;
  }
}

}  // namespace

std::vector<std::size_t> ExperimentConfig::mlp_dims() const {
  std::vector<std::size_t> dims{pca.components};
  std::stringstream ss(classifier.hidden);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size() || v == 0)
      fail(ErrorKind::Usage, "config [classifier] hidden: bad width list '" + classifier.hidden + "'");
    dims.push_back(v);
  }
  dims.push_back(kNumClasses);
  return dims;
}

NoiseSchedule ExperimentConfig::schedule() const {
  return NoiseSchedule::linear(diffusion.steps, diffusion.beta_start, diffusion.beta_end);
}

AugmentPolicy ExperimentConfig::augment_policy() const {
  AugmentPolicy p = diffusion.augment;
  if (diffusion.policy == "balance") p.kind = AugmentPolicy::Kind::BalanceTo;
  else if (diffusion.policy == "uniform") p.kind = AugmentPolicy::Kind::UniformPerSample;
  else fail(ErrorKind::Usage, "config [diffusion] policy must be 'balance' or 'uniform'");
  return p;
}

void ExperimentConfig::validate() const {
  (void)mlp_dims();
  (void)augment_policy();
  try {
    device.validate();
    compile.encoding.validate();
    DenoiserConfig net_check = diffusion.net;
    net_check.validate();
    (void)schedule();
  } catch (const Error& e) {
    fail(ErrorKind::Usage, std::string("config: ") + e.what());
  }
  if (diffusion.augment.per_sample_min > diffusion.augment.per_sample_max)
    fail(ErrorKind::Usage, "config [diffusion] per_sample_min exceeds per_sample_max");
  if (classifier.seeds == 0) fail(ErrorKind::Usage, "config [classifier] seeds must be positive");
}

ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Usage, std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  std::set<std::pair<std::string, std::string>> known;
  visit_fields(cfg, [&](const char* section, const char* key, auto& field) {
    known.emplace(section, key);
    if (auto sec = tree.get_child_optional(section))
      if (auto node = sec->get_child_optional(pt::ptree::path_type(key, '\0')))
        from_text(section, key, node->data(), field);
  });
  for (const auto& [section, sub] : tree) {
    if (sub.empty()) fail(ErrorKind::Usage, "config: key '" + section + "' outside any section");
    for (const auto& [key, node] : sub) {
      (void)node;
      if (!known.count({section, key})) fail(ErrorKind::Usage, "config: unknown key [" + section + "] " + key);
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Usage, "cannot read config " + path.string());
  return parse_config(is);
}

std::string serialize_config(const ExperimentConfig& config) {
  std::ostringstream os;
  std::string current;
  visit_fields(config, [&](const char* section, const char* key, const auto& field) {
    if (current != section) {
      os << (current.empty() ? "" : "\n") << '[' << section << "]\n";
      current = section;
    }
    os << key << " = " << to_text(field) << '\n';
  });
  return os.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace imc
