#include "imc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "imc/error.hpp"
#include "imc/svg.hpp"

namespace imc {

namespace fs = std::filesystem;

// ---- features ----------------------------------------------------------------------

Matrix FeatureSpace::transform(const Matrix& spectra) const {
  Matrix out = project(pca, spectra);
  for (auto& v : out.data) v *= scale;
  return out;
}

namespace {

std::vector<std::size_t> reference_ids(const SpectralDataset& ds) {
  const bool has_split = ds.assignment.size() == ds.size();
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.spectra[i].provenance == Provenance::Synthetic && (!has_split || ds.assignment[i] == Split::Train))
      ids.push_back(i);
  return ids;
}

}  // namespace

FeatureSpace fit_feature_space(const SpectralDataset& dataset, std::size_t components) {
  const auto ids = reference_ids(dataset);
  FeatureSpace out;
  out.pca = fit_pca(dataset.matrix(ids), components);
  const double lead = out.pca.explained_variance.front();
  out.scale = lead > 0.0 ? 1.0 / std::sqrt(lead) : 1.0;
  return out;
}

Checkpoint feature_space_to_checkpoint(const FeatureSpace& f) {
  Checkpoint ck = pca_to_checkpoint(f.pca);
  ck.put_scalar("feature_scale", f.scale);
  return ck;
}

FeatureSpace feature_space_from_checkpoint(const Checkpoint& ck) {
  return {pca_from_checkpoint(ck), ck.scalar("feature_scale")};
}

// ---- data --------------------------------------------------------------------------

SpectralDataset make_dataset(const ExperimentConfig& cfg) {
  GeneratorParams gen = cfg.data.generator;
  auto ds = generate_synthetic(cfg.data.counts, gen, Rng(cfg.run.seed).split(streams::kData).seed());
  apply_split(ds, cfg);
  return ds;
}

std::vector<std::string> apply_split(SpectralDataset& dataset, const ExperimentConfig& cfg) {
  SplitOptions opt;
  opt.ratios = {cfg.data.train_ratio, cfg.data.val_ratio, 1.0};
  opt.seed = cfg.run.seed;
  std::size_t originals = 0;
  for (const auto& s : dataset.spectra) {
    if (s.provenance == Provenance::Generated) opt.mode = SplitMode::AugmentedTestRealOnly;
    else ++originals;
  }
  std::vector<std::string> warnings;
  opt.test_count = cfg.data.test_count;
  if (opt.test_count >= originals) {
    warnings.push_back("test_count " + std::to_string(opt.test_count) + " does not leave training data among " +
                       std::to_string(originals) + " originals; using the ratio rule");
    opt.test_count = 0;
  }
  auto more = split(dataset, opt);
  warnings.insert(warnings.end(), more.begin(), more.end());
  return warnings;
}

LabeledSet labeled(const SpectralDataset& dataset, Split split, const FeatureSpace& f) {
  const auto ids = dataset.ids(split);
  return {f.transform(dataset.matrix(ids)), dataset.labels(ids)};
}

Matrix strided_rows(const Matrix& x, std::size_t n) {
  if (x.rows <= n) return x;
  Matrix out(n, x.cols);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t src = r * x.rows / n;
    std::copy(x.row(src).begin(), x.row(src).end(), out.row(r).begin());
  }
  return out;
}

// ---- models ------------------------------------------------------------------------

DiffusionBundle train_diffusion_model(const SpectralDataset& dataset, const FeatureSpace& f,
                                      const ExperimentConfig& cfg) {
  const auto ids = reference_ids(dataset);
  const Matrix spectra = dataset.matrix(ids);
  DiffusionBundle b;
  b.codec = SpectrumCodec::fit(spectra, cfg.diffusion.net.signal_length, cfg.diffusion.net.patch_size);
  DenoiserConfig net_cfg = cfg.diffusion.net;
  net_cfg.signal_length = b.codec.padded_length;
  Matrix x0(ids.size(), b.codec.padded_length), cond(ids.size(), net_cfg.k_cond);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto enc = b.codec.encode(spectra.row(r));
    std::copy(enc.begin(), enc.end(), x0.row(r).begin());
    if (net_cfg.k_cond > 0) {
      const auto c = whitened_condition(f.pca, spectra.row(r), net_cfg.k_cond);
      std::copy(c.begin(), c.end(), cond.row(r).begin());
    }
  }
  Rng init = Rng(cfg.run.seed).split(streams::kDiffusion).split(0);
  b.net = DenoiserNet(net_cfg, init);
  DiffusionTrainConfig tc = cfg.diffusion.train;
  tc.seed = cfg.run.seed;
  b.losses = train_denoiser(b.net, x0, cond, cfg.schedule(), tc);
  return b;
}

std::uint64_t replicate_seed(std::uint64_t root, std::size_t k) {
  return Rng(root).split(streams::kTrain).split(1000 + k).seed();
}

ClassifierRun train_classifier(const LabeledSet& train, const LabeledSet& val, const LabeledSet& test,
                               const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.classifier.train;
  tc.seed = seed;
  ClassifierRun run{imc::train(train, val, tc, cfg.mlp_dims()), {}, {}, {}};
  run.quantized = quantize(run.trained.model, train.x);
  run.float_test = evaluate(predict(run.trained.model, test.x), test.y);
  run.int_test = evaluate(int_predict(run.quantized, test.x), test.y);
  return run;
}

// ---- experiment --------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  ExperimentResult res;
  SpectralDataset base = make_dataset(cfg);
  res.original_counts = base.class_counts();
  const FeatureSpace feats = fit_feature_space(base, cfg.pca.components);
  const auto diff = train_diffusion_model(base, feats, cfg);
  auto aug = augment(base, diff.net, cfg.augment_policy(), feats.pca, diff.codec, cfg.schedule(), cfg.run.seed);
  res.warnings = aug.warnings;
  SpectralDataset augmented = std::move(aug.dataset);
  auto w = apply_split(augmented, cfg);
  res.warnings.insert(res.warnings.end(), w.begin(), w.end());
  res.augmented_counts = augmented.class_counts();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / artifacts::kDiffusionLoss);
    os << "step,loss\n";
    for (std::size_t i = 0; i < diff.losses.size(); ++i) os << i + 1 << ',' << format_double(diff.losses[i]) << '\n';
  }

  const LabeledSet test = labeled(base, Split::Test, feats);
  const LabeledSet base_train = labeled(base, Split::Train, feats), base_val = labeled(base, Split::Val, feats);
  const LabeledSet aug_train = labeled(augmented, Split::Train, feats), aug_val = labeled(augmented, Split::Val, feats);
  for (std::size_t k = 0; k < cfg.classifier.seeds; ++k) {
    const auto seed = replicate_seed(cfg.run.seed, k);
    const auto b = train_classifier(base_train, base_val, test, cfg, seed);
    res.rows.push_back({"baseline", k, b.float_test, b.int_test, {}, false});

    const auto a = train_classifier(aug_train, aug_val, test, cfg, seed);
    const auto plan = compile(a.quantized, strided_rows(aug_train.x, cfg.compile.calibration_samples), cfg.compile);
    const auto device = program_plan(plan, cfg.device, seed);
    const auto cmp = compare_environments(a.trained.model, a.quantized, plan, device, test,
                                          {cfg.run.noise, seed, cfg.run.threads});
    res.rows.push_back({"augmented", k, cmp.rows[0].metrics, cmp.rows[1].metrics, cmp.rows[2].metrics, true});
  }
  return res;
}

void write_experiment_csv(std::ostream& os, const ExperimentResult& r) {
  os << "arm,replicate,env,overall,healthy,heart_attack,liver_cancer\n";
  auto row = [&](const ArmRow& a, const char* env, const Metrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%s,%.6f,%.6f,%.6f,%.6f\n", a.arm.c_str(), a.replicate, env, m.overall,
                  m.per_class[0], m.per_class[1], m.per_class[2]);
    os << buf;
  };
  for (const auto& a : r.rows) {
    row(a, "Float", a.float_test);
    row(a, "QuantizedSim", a.quant_test);
    if (a.has_hardware) row(a, "SocSim", a.soc_test);
  }
}

// ---- commands ----------------------------------------------------------------------

namespace {

template <class F>
void write_file(const fs::path& path, F&& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot write " + path.string());
  body(os);
  if (!os) fail(ErrorKind::Data, "write failed: " + path.string());
}

void require(const fs::path& path, const char* producer) {
  if (!fs::exists(path))
    fail(ErrorKind::Data, "missing " + path.string() + " (run `imc " + std::string(producer) + "` first)");
}

std::string counts_line(const char* what, const ClassCounts& c) {
  return std::string(what) + ": healthy " + std::to_string(c[0]) + ", heart_attack " + std::to_string(c[1]) +
         ", liver_cancer " + std::to_string(c[2]);
}

SpectralDataset load_split(const fs::path& path, const ExperimentConfig& cfg, std::vector<std::string>* notes) {
  auto ds = read_dataset(path);
  auto w = apply_split(ds, cfg);
  if (notes) notes->insert(notes->end(), w.begin(), w.end());
  return ds;
}

struct ModelBundle {
  MlpModel model;
  QuantizedModel quantized;
};

ModelBundle load_model(const fs::path& out) {
  require(out / artifacts::kModel, "train");
  const auto ck = Checkpoint::load(out / artifacts::kModel);
  return {model_from_checkpoint(ck), quantized_from_checkpoint(ck)};
}

}  // namespace

std::vector<std::string> cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  auto ds = generate_synthetic(cfg.data.counts, cfg.data.generator, Rng(cfg.run.seed).split(streams::kData).seed());
  std::vector<std::string> notes;
  auto w = apply_split(ds, cfg);
  notes.insert(notes.end(), w.begin(), w.end());
  write_dataset(out / artifacts::kDataset, ds);
  write_file(out / artifacts::kClassCounts, [&](std::ostream& os) {
    os << "label,total,train,val,test\n";
    for (int c = 0; c < kNumClasses; ++c)
      os << label_name(static_cast<Label>(c)) << ',' << ds.class_counts()[c] << ',' << ds.class_counts(Split::Train)[c]
         << ',' << ds.class_counts(Split::Val)[c] << ',' << ds.class_counts(Split::Test)[c] << '\n';
  });
  notes.push_back("wrote " + std::to_string(ds.size()) + " spectra to " + (out / artifacts::kDataset).string());
  notes.push_back(counts_line("counts", ds.class_counts()));
  return notes;
}

std::vector<std::string> cmd_train_diffusion(const ExperimentConfig& cfg, const fs::path& out) {
  require(out / artifacts::kDataset, "gen-data");
  std::vector<std::string> notes;
  const auto ds = load_split(out / artifacts::kDataset, cfg, &notes);
  const auto feats = fit_feature_space(ds, cfg.pca.components);
  feature_space_to_checkpoint(feats).save(out / artifacts::kFeatures);
  const auto b = train_diffusion_model(ds, feats, cfg);
  Checkpoint ck = denoiser_to_checkpoint(b.net);
  put_codec(ck, b.codec);
  ck.save(out / artifacts::kDiffusion);
  write_file(out / artifacts::kDiffusionLoss, [&](std::ostream& os) {
    os << "step,loss\n";
    for (std::size_t i = 0; i < b.losses.size(); ++i) os << i + 1 << ',' << format_double(b.losses[i]) << '\n';
  });
  char buf[128];
  std::snprintf(buf, sizeof buf, "denoiser trained for %zu steps; final loss %.4f", b.losses.size(),
                b.losses.empty() ? 0.0 : b.losses.back());
  notes.push_back(buf);
  return notes;
}

std::vector<std::string> cmd_augment(const ExperimentConfig& cfg, const fs::path& out) {
  require(out / artifacts::kDataset, "gen-data");
  require(out / artifacts::kDiffusion, "train-diffusion");
  std::vector<std::string> notes;
  const auto ds = load_split(out / artifacts::kDataset, cfg, &notes);
  const auto feats = feature_space_from_checkpoint(Checkpoint::load(out / artifacts::kFeatures));
  const auto ck = Checkpoint::load(out / artifacts::kDiffusion);
  const auto net = denoiser_from_checkpoint(ck);
  const auto codec = codec_from_checkpoint(ck);
  auto res = augment(ds, net, cfg.augment_policy(), feats.pca, codec, cfg.schedule(), cfg.run.seed);
  notes.insert(notes.end(), res.warnings.begin(), res.warnings.end());
  write_dataset(out / artifacts::kAugmented, res.dataset);
  if (!res.example_snapshots.empty()) {
    std::size_t first_generated = ds.size();
    const Label label = first_generated < res.dataset.size() ? res.dataset.spectra[first_generated].label : Label::Healthy;
    write_file(out / artifacts::kSnapshots, [&](std::ostream& os) { write_snapshots(os, res.example_snapshots, label); });
  }
  notes.push_back(counts_line("augmented counts", res.dataset.class_counts()));
  return notes;
}

std::vector<std::string> cmd_train(const ExperimentConfig& cfg, const fs::path& out, bool augmented) {
  const fs::path data = out / (augmented ? artifacts::kAugmented : artifacts::kDataset);
  require(data, augmented ? "augment" : "gen-data");
  std::vector<std::string> notes;
  const auto ds = load_split(data, cfg, &notes);
  FeatureSpace feats;
  if (fs::exists(out / artifacts::kFeatures)) {
    feats = feature_space_from_checkpoint(Checkpoint::load(out / artifacts::kFeatures));
  } else {
    feats = fit_feature_space(ds, cfg.pca.components);
    feature_space_to_checkpoint(feats).save(out / artifacts::kFeatures);
  }
  const auto train = labeled(ds, Split::Train, feats), val = labeled(ds, Split::Val, feats),
             test = labeled(ds, Split::Test, feats);
  const auto run = train_classifier(train, val, test, cfg, replicate_seed(cfg.run.seed, 0));
  Checkpoint ck = model_to_checkpoint(run.trained.model);
  put_quantized(ck, run.quantized);
  ck.save(out / artifacts::kModel);
  const auto& c = run.trained.curves;
  write_file(out / artifacts::kLossCurves, [&](std::ostream& os) {
    os << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < c.train_loss.size(); ++e)
      os << e + 1 << ',' << format_double(c.train_loss[e]) << ',' << format_double(c.val_loss[e]) << '\n';
  });
  write_file(out / artifacts::kAccuracyCurves, [&](std::ostream& os) {
    os << "epoch,train_acc,val_acc\n";
    for (std::size_t e = 0; e < c.train_acc.size(); ++e)
      os << e + 1 << ',' << format_double(c.train_acc[e]) << ',' << format_double(c.val_acc[e]) << '\n';
  });
  write_file(out / artifacts::kMetrics, [&](std::ostream& os) {
    write_metrics_header(os);
    write_metrics_row(os, "Float", run.float_test);
    write_metrics_row(os, "QuantizedSim", run.int_test);
  });
  char buf[160];
  std::snprintf(buf, sizeof buf, "best epoch %zu; test accuracy float %.4f, int8 %.4f (%zu samples)",
                run.trained.best_epoch, run.float_test.overall, run.int_test.overall, run.float_test.n);
  notes.push_back(buf);
  return notes;
}

namespace {

// The dataset the model was trained on: augmented if present.
fs::path training_data(const fs::path& out) {
  return fs::exists(out / artifacts::kAugmented) ? out / artifacts::kAugmented : out / artifacts::kDataset;
}

MappingPlan load_plan(const fs::path& out) {
  require(out / artifacts::kPlan, "compile");
  std::ifstream is(out / artifacts::kPlan, std::ios::binary);
  return read_plan(is);
}

}  // namespace

std::vector<std::string> cmd_compile(const ExperimentConfig& cfg, const fs::path& out) {
  const auto m = load_model(out);
  require(out / artifacts::kFeatures, "train");
  const auto feats = feature_space_from_checkpoint(Checkpoint::load(out / artifacts::kFeatures));
  const auto ds = load_split(training_data(out), cfg, nullptr);
  const auto train = labeled(ds, Split::Train, feats);
  const auto plan = compile(m.quantized, strided_rows(train.x, cfg.compile.calibration_samples), cfg.compile);
  write_file(out / artifacts::kPlan, [&](std::ostream& os) { write_plan(os, plan); });
  std::vector<std::string> notes;
  char buf[160];
  std::snprintf(buf, sizeof buf, "plan: %zu tiles, %zu cells, %zu VMMs and %zu MACs per sample", plan.tiles.size(),
                plan.used_cells(), plan.vmms_per_sample(), plan.macs_per_sample());
  notes.push_back(buf);
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& lp = plan.layers[l];
    std::snprintf(buf, sizeof buf, "layer %zu: tile %zu cols %zu..%zu, adc shift %u, calibration clamp %.4f", l + 1,
                  lp.tile, lp.col_begin, lp.col_begin + lp.out, lp.adc_shift, lp.calibration_clamp);
    notes.push_back(buf);
  }
  return notes;
}

std::vector<std::string> cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  const auto m = load_model(out);
  const auto plan = load_plan(out);
  if (plan.model_fingerprint != fingerprint(m.quantized))
    fail(ErrorKind::Integrity, "plan.txt was compiled from a different model than model.imcf");
  const auto feats = feature_space_from_checkpoint(Checkpoint::load(out / artifacts::kFeatures));
  const auto ds = load_split(training_data(out), cfg, nullptr);
  const auto test = labeled(ds, Split::Test, feats);
  const DeviceParams params = cfg.run.noise ? cfg.device : DeviceParams::ideal();
  const auto device = program_plan(plan, params, cfg.run.seed);
  write_file(out / artifacts::kProgramReport, [&](std::ostream& os) {
    os << "tile,rmse_all,rmse_free,mean_iterations,max_iterations,unconverged,stuck_off,stuck_on\n";
    for (std::size_t k = 0; k < device.reports.size(); ++k) {
      const auto& r = device.reports[k];
      os << k << ',' << format_double(r.rmse_all) << ',' << format_double(r.rmse_free) << ','
         << format_double(r.mean_iterations) << ',' << r.max_iterations << ',' << r.unconverged << ',' << r.stuck_off
         << ',' << r.stuck_on << '\n';
    }
  });
  const auto cmp = compare_environments(m.model, m.quantized, plan, device, test,
                                        {cfg.run.noise, cfg.run.seed, cfg.run.threads});
  write_file(out / artifacts::kEnvResults, [&](std::ostream& os) { write_env_results(os, cmp); });
  write_file(out / artifacts::kResiduals, [&](std::ostream& os) { write_residuals(os, cmp); });
  write_file(out / artifacts::kTraceSummary, [&](std::ostream& os) { write_trace_summary(os, cmp); });
  std::vector<std::string> notes;
  for (const auto& r : cmp.rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-12s accuracy %.4f", std::string(environment_name(r.environment)).c_str(),
                  r.metrics.overall);
    notes.push_back(buf);
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "layer-1 residual mean |d| %.4g (%.3f weight units), %zu stuck weights, %.2fs on tiles",
                cmp.residual.mean_abs, cmp.residual.mean_abs_units, device.stuck_weights.size(), cmp.soc_wall_seconds);
  notes.push_back(buf);
  return notes;
}

std::vector<std::string> cmd_device_cdf(const ExperimentConfig& cfg, const fs::path& out, std::size_t cells) {
  fs::create_directories(out);
  const auto study = conductance_cdf_study(cfg.device, cfg.run.seed, cells);
  write_file(out / artifacts::kCdf, [&](std::ostream& os) { write_cdf_csv(os, study); });
  write_file(out / artifacts::kCdfMedians, [&](std::ostream& os) {
    os << "target_level,median_read\n";
    for (int t = 0; t < 256; ++t) os << t << ',' << study.medians[t] << '\n';
  });
  int worst = 0;
  for (int t = 0; t < 256; ++t) worst = std::max(worst, std::abs(study.medians[t] - t));
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu cells: rmse_free %.3f, %zu stuck, worst median offset %d levels", cells,
                study.report.rmse_free, study.stuck_count(), worst);
  return {buf};
}

// ---- report ------------------------------------------------------------------------

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(ErrorKind::Data, "csv: missing column " + name);
  }
  std::vector<double> numbers(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(c < r.size() && !r[c].empty() ? std::stod(r[c]) : 0.0);
    return out;
  }
};

Csv read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Data, "cannot read " + path.string());
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (first) csv.header = std::move(fields), first = false;
    else csv.rows.push_back(std::move(fields));
  }
  return csv;
}

void write_svg(const fs::path& path, const std::string& svg, std::vector<std::string>& notes) {
  write_file(path, [&](std::ostream& os) { os << svg; });
  notes.push_back("wrote " + path.string());
}

}  // namespace

std::vector<std::string> cmd_report(const ExperimentConfig& cfg, const fs::path& out, bool experiment) {
  fs::create_directories(out);
  std::vector<std::string> notes;
  if (experiment) {
    const auto res = run_experiment(cfg, out);
    notes.insert(notes.end(), res.warnings.begin(), res.warnings.end());
    write_file(out / artifacts::kExperiment, [&](std::ostream& os) { write_experiment_csv(os, res); });
    notes.push_back("wrote " + (out / artifacts::kExperiment).string());
  }

  if (fs::exists(out / artifacts::kCdfMedians)) {
    // Cumulative curves for a spread of target levels.
    const auto csv = read_csv(out / artifacts::kCdf);
    std::map<int, Series> by_target;
    for (const auto& r : csv.rows) {
      const int t = std::stoi(r[0]);
      if (t % 32 != 0 && t != 255) continue;
      auto& s = by_target[t];
      s.name = "level " + std::to_string(t);
      s.x.push_back(std::stod(r[1]));
      s.y.push_back(std::stod(r[2]));
    }
    std::vector<Series> series;
    for (auto& [t, s] : by_target) series.push_back(std::move(s));
    write_svg(out / "device_cdf.svg", line_chart(series, {"Read-level CDF after programming", "read level", "cumulative fraction"}),
              notes);
  }
  if (fs::exists(out / artifacts::kLossCurves)) {
    const auto csv = read_csv(out / artifacts::kLossCurves);
    const auto epoch = csv.numbers("epoch");
    write_svg(out / "loss_curves.svg",
              line_chart({{"train", epoch, csv.numbers("train_loss")}, {"val", epoch, csv.numbers("val_loss")}},
                         {"Classifier loss", "epoch", "loss"}),
              notes);
  }
  if (fs::exists(out / artifacts::kDiffusionLoss)) {
    const auto csv = read_csv(out / artifacts::kDiffusionLoss);
    write_svg(out / "diffusion_loss.svg",
              line_chart({{"loss", csv.numbers("step"), csv.numbers("loss")}},
                         {"Denoiser training loss", "step", "loss", 640, 400, true}),
              notes);
  }
  if (fs::exists(out / artifacts::kSnapshots)) {
    std::ifstream is(out / artifacts::kSnapshots);
    std::vector<Series> series;
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("# snapshots t=", 0) == 0) {
        series.push_back({"t=" + line.substr(14), {}, {}});
        continue;
      }
      if (line.empty() || line[0] == '#' || series.empty() || !series.back().y.empty()) continue;
      std::stringstream ss(line);
      std::string f;
      std::vector<double> v;
      while (std::getline(ss, f, ',')) {
        try {
          v.push_back(std::stod(f));
        } catch (const std::exception&) {
        }
      }
      for (std::size_t i = 0; i < v.size(); ++i) {
        series.back().x.push_back(static_cast<double>(i));
        series.back().y.push_back(v[i] + 2.0 * static_cast<double>(series.size() - 1));
      }
    }
    write_svg(out / "denoising_snapshots.svg",
              line_chart(series, {"Denoising trajectory (offset per snapshot)", "coordinate", "value"}), notes);
  }
  std::vector<BarGroup> bars;
  std::vector<std::string> bar_names{"overall", "healthy", "heart_attack", "liver_cancer"};
  if (fs::exists(out / artifacts::kEnvResults)) {
    const auto csv = read_csv(out / artifacts::kEnvResults);
    for (const auto& r : csv.rows)
      bars.push_back({r[0], {std::stod(r[1]), std::stod(r[2]), std::stod(r[3]), std::stod(r[4])}});
  }
  if (fs::exists(out / artifacts::kExperiment)) {
    const auto csv = read_csv(out / artifacts::kExperiment);
    std::map<std::string, std::vector<std::vector<double>>> groups;
    std::vector<std::string> order;
    for (const auto& r : csv.rows) {
      const std::string key = r[0] + "/" + r[2];
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back({std::stod(r[3]), std::stod(r[4]), std::stod(r[5]), std::stod(r[6])});
    }
    for (const auto& key : order) {
      BarGroup g{key + " (median)", {}};
      for (std::size_t c = 0; c < 4; ++c) {
        std::vector<double> col;
        for (const auto& v : groups[key]) col.push_back(v[c]);
        g.values.push_back(median(col));
      }
      bars.push_back(std::move(g));
    }
  }
  if (!bars.empty())
    write_svg(out / "accuracy.svg",
              bar_chart(bars, bar_names, {"Test accuracy and per-class recall", "", "fraction", 900, 420}), notes);
  if (notes.empty()) notes.push_back("no artifacts found in " + out.string());
  return notes;
}

}  // namespace imc
