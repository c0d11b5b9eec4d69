// Single entry point for the experiment pipeline. Exit codes follow
// imc::exit_code(): 0 ok, 1 usage, 2 data, 3 divergence, 4 programming,
// 5 integrity.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "imc/config.hpp"
#include "imc/error.hpp"
#include "imc/pipeline.hpp"

namespace {

imc::ClassCounts parse_counts(const std::string& text) {
  imc::ClassCounts c{};
  std::size_t k = 0, pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find(',', pos), text.size());
    if (k == c.size()) imc::fail(imc::ErrorKind::Usage, "--counts takes exactly three values");
    try {
      std::size_t used = 0;
      const auto item = text.substr(pos, end - pos);
      c[k++] = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      imc::fail(imc::ErrorKind::Usage, "--counts: bad value in '" + text + "'");
    }
    pos = end + 1;
  }
  if (k != c.size()) imc::fail(imc::ErrorKind::Usage, "--counts takes exactly three values");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral classification on a simulated memristor crossbar"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  std::string config_path, out_dir = "out", counts, noise;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool augmented = false, experiment = false, print_config = false;
  app.add_option("--config", config_path, "INI experiment config");
  auto* seed_opt = app.add_option("--seed", seed, "root seed (overrides [run] seed)");
  app.add_option("--out", out_dir, "artifact directory")->capture_default_str();
  auto* threads_opt = app.add_option("--threads", threads, "worker cap (overrides [run] threads)");
  app.add_flag("--print-config", print_config, "print the effective config and exit");

  auto* gen = app.add_subcommand("gen-data", "generate and split the synthetic dataset");
  gen->add_option("--counts", counts, "healthy,heart_attack,liver_cancer");
  app.add_subcommand("train-diffusion", "fit the conditional denoiser on the training spectra");
  app.add_subcommand("augment", "append generated spectra per the augmentation policy");
  auto* train = app.add_subcommand("train", "train, quantize and evaluate the classifier");
  train->add_flag("--augmented", augmented, "train on the augmented dataset");
  app.add_subcommand("compile", "map the quantized classifier onto crossbar tiles");
  auto* sim = app.add_subcommand("simulate", "program tiles and compare Float / QuantizedSim / SocSim");
  sim->add_option("--noise", noise, "on|off")->check(CLI::IsMember({"on", "off"}));
  app.add_subcommand("device-cdf", "65,536-cell programming study");
  auto* report = app.add_subcommand("report", "render SVG plots from the CSV artifacts");
  report->add_flag("--experiment", experiment, "first run the multi-seed baseline vs augmented comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    imc::ExperimentConfig cfg = config_path.empty() ? imc::ExperimentConfig{} : imc::load_config(config_path);
    if (*seed_opt) cfg.run.seed = seed;
    if (*threads_opt) cfg.run.threads = std::max<std::size_t>(1, threads);
    if (!counts.empty()) cfg.data.counts = parse_counts(counts);
    if (!noise.empty()) cfg.run.noise = noise == "on";
    cfg.validate();
    if (print_config) {
      std::cout << imc::serialize_config(cfg);
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 1;
    }
    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    const std::string cmd = app.get_subcommands().front()->get_name();
    std::vector<std::string> lines;
    if (cmd == "gen-data") lines = imc::cmd_gen_data(cfg, out);
    else if (cmd == "train-diffusion") lines = imc::cmd_train_diffusion(cfg, out);
    else if (cmd == "augment") lines = imc::cmd_augment(cfg, out);
    else if (cmd == "train") lines = imc::cmd_train(cfg, out, augmented);
    else if (cmd == "compile") lines = imc::cmd_compile(cfg, out);
    else if (cmd == "simulate") lines = imc::cmd_simulate(cfg, out);
    else if (cmd == "device-cdf") lines = imc::cmd_device_cdf(cfg, out);
    else if (cmd == "report") lines = imc::cmd_report(cfg, out, experiment);
    for (const auto& l : lines) std::cout << l << '\n';
    return 0;
  } catch (const imc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return imc::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
