#include "imc/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <mutex>
#include <thread>

#include "imc/error.hpp"
#include "imc/spectra.hpp"

namespace imc {

namespace {

// Static partition of [0, n) over up to `threads` workers. Every index owns
// its output slot and its rng stream, so the result is thread-count invariant.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * n / threads; i < (t + 1) * n / threads; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Rng sample_stream(std::uint64_t seed, std::size_t i) { return Rng(seed).split(streams::kDevice).split(1u << 20).split(i); }

}  // namespace

void check_device(const MappingPlan& plan, const ProgrammedDevice& device) {
  if (device.plan_hash != plan.hash() || device.tiles.size() != plan.tiles.size())
    fail(ErrorKind::Integrity, "device was programmed from a different mapping plan");
}

ExecutionTrace infer(const MappingPlan& plan, const ProgrammedDevice& device, std::span<const double> features,
                     Rng* noise) {
  AccumulateFn on_tiles = [&](const LayerPlan& layer, std::span<const std::uint8_t> dac) {
    return device.tiles.at(layer.tile).accumulate(dac, noise, layer.col_begin, layer.col_begin + layer.out);
  };
  return execute_plan(plan, features, on_tiles);
}

BatchRun infer_batch(const MappingPlan& plan, const ProgrammedDevice& device, const Matrix& features,
                     const RunOptions& options) {
  check_device(plan, device);
  BatchRun run;
  run.predicted.resize(features.rows);
  run.traces.resize(features.rows);
  const auto start = std::chrono::steady_clock::now();
  parallel_for(features.rows, options.threads, [&](std::size_t i) {
    Rng rng = sample_stream(options.noise_seed, i);
    run.traces[i] = infer(plan, device, features.row(i), options.noise_on ? &rng : nullptr);
    run.predicted[i] = run.traces[i].predicted;
  });
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

BatchRun golden_batch(const MappingPlan& plan, const Matrix& features, std::size_t threads) {
  BatchRun run;
  run.predicted.resize(features.rows);
  run.traces.resize(features.rows);
  const auto start = std::chrono::steady_clock::now();
  parallel_for(features.rows, threads, [&](std::size_t i) {
    run.traces[i] = golden_infer(plan, features.row(i));
    run.predicted[i] = run.traces[i].predicted;
  });
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

std::string_view environment_name(Environment env) {
  switch (env) {
    case Environment::Float: return "Float";
    case Environment::QuantizedSim: return "QuantizedSim";
    case Environment::SocSim: return "SocSim";
  }
  return "?";
}

EnvComparison compare_environments(const MlpModel& model, const QuantizedModel& quantized, const MappingPlan& plan,
                                   const ProgrammedDevice& device, const LabeledSet& test, const RunOptions& options) {
  if (plan.model_fingerprint != fingerprint(quantized))
    fail(ErrorKind::Integrity, "mapping plan was compiled from a different quantized model");
  check_device(plan, device);
  if (test.x.rows != test.y.size() || test.x.rows == 0) fail(ErrorKind::Data, "compare_environments: empty test set");

  EnvComparison cmp;
  cmp.samples = test.x.rows;
  const auto float_pred = predict(model, test.x);
  const auto golden = golden_batch(plan, test.x, options.threads);
  const auto soc = infer_batch(plan, device, test.x, options);
  cmp.soc_wall_seconds = soc.wall_seconds;
  cmp.rows.push_back({Environment::Float, evaluate(float_pred, test.y)});
  cmp.rows.push_back({Environment::QuantizedSim, evaluate(golden.predicted, test.y)});
  cmp.rows.push_back({Environment::SocSim, evaluate(soc.predicted, test.y)});

  const auto& first = plan.layers.front();
  const double unit = first.weight_scale * first.input_q.scale * 255.0;
  double sum = 0.0, sum_sq = 0.0, max_abs = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < cmp.samples; ++i) {
    const auto& a = golden.traces[i].layers.front().real;
    const auto& b = soc.traces[i].layers.front().real;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = std::abs(b[j] - a[j]);
      sum += d;
      sum_sq += d * d;
      max_abs = std::max(max_abs, d);
      ++count;
    }
  }
  cmp.residual.mean_abs = sum / static_cast<double>(count);
  cmp.residual.max_abs = max_abs;
  cmp.residual.rms = std::sqrt(sum_sq / static_cast<double>(count));
  cmp.residual.mean_abs_units = cmp.residual.mean_abs / unit;
  cmp.residual.max_abs_units = max_abs / unit;

  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& lp = plan.layers[l];
    LayerTraceSummary s{l + 1, lp.passes(), lp.used_rows(), lp.out, lp.adc_shift, 0, 0, 0.0};
    std::size_t rail = 0, conversions = 0;
    for (const auto& tr : soc.traces) {
      for (const auto& pass : tr.layers[l].adc)
        for (auto code : pass) {
          ++conversions;
          if (code == 255 || (lp.zero_code > 0 && code == 0)) ++rail;
        }
    }
    s.vmm_total = lp.passes() * cmp.samples;
    s.mac_total = lp.used_rows() * lp.out * lp.passes() * cmp.samples;
    s.clamp_rate = conversions ? static_cast<double>(rail) / static_cast<double>(conversions) : 0.0;
    cmp.layers.push_back(s);
  }
  return cmp;
}

void write_env_results(std::ostream& os, const EnvComparison& cmp) {
  write_metrics_header(os);
  for (const auto& r : cmp.rows) write_metrics_row(os, std::string(environment_name(r.environment)), r.metrics);
}

void write_residuals(std::ostream& os, const EnvComparison& cmp) {
  os << "layer,stat,value\n";
  const auto& r = cmp.residual;
  os << "1,mean_abs," << format_double(r.mean_abs) << '\n';
  os << "1,max_abs," << format_double(r.max_abs) << '\n';
  os << "1,rms," << format_double(r.rms) << '\n';
  os << "1,mean_abs_units," << format_double(r.mean_abs_units) << '\n';
  os << "1,max_abs_units," << format_double(r.max_abs_units) << '\n';
}

void write_trace_summary(std::ostream& os, const EnvComparison& cmp) {
  os << "layer,passes,used_rows,used_cols,adc_shift,samples,vmm_total,mac_total,clamp_rate\n";
  std::size_t vmm = 0, mac = 0;
  for (const auto& s : cmp.layers) {
    os << s.layer << ',' << s.passes << ',' << s.used_rows << ',' << s.used_cols << ',' << s.adc_shift << ','
       << cmp.samples << ',' << s.vmm_total << ',' << s.mac_total << ',' << format_double(s.clamp_rate) << '\n';
    vmm += s.vmm_total;
    mac += s.mac_total;
  }
  os << "total,,,,," << cmp.samples << ',' << vmm << ',' << mac << ",\n";
}

double median(std::vector<double> v) {
  if (v.empty()) fail(ErrorKind::Contract, "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SweepPoint> program_noise_sweep(const MappingPlan& plan, const LabeledSet& test,
                                            const DeviceParams& base, std::span<const double> sigmas,
                                            std::span<const std::uint64_t> seeds, std::size_t threads) {
  std::vector<SweepPoint> points;
  for (double sigma : sigmas)
    for (auto seed : seeds) {
      DeviceParams p = base;
      p.program_noise_sigma = sigma;
      const auto device = program_plan(plan, p, seed);
      const auto run = infer_batch(plan, device, test.x, {true, seed, threads});
      points.push_back({sigma, seed, evaluate(run.predicted, test.y).overall});
    }
  return points;
}

}  // namespace imc
