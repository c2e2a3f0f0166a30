// lrd: command-line driver for the long-range distillation experiments.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <omp.h>

#include <CLI11.hpp>

#include "lrd/config.hpp"
#include "lrd/error.hpp"
#include "lrd/experiments.hpp"
#include "lrd/log.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> lead;
  std::optional<int> workers;
  bool verbose = false;
  bool quiet = false;
};

lrd::config::ExperimentConfig load(const Options& o) {
  auto cfg = lrd::config::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.workers) cfg.workers = *o.workers;
  if (o.lead) {
    try {
      cfg.lead = lrd::targets::parse_lead_label(*o.lead);
    } catch (const std::invalid_argument& e) {
      throw lrd::ConfigError(std::string("--lead: ") + e.what());
    }
  }
  if (const char* env = std::getenv("LRD_DATA_DIR"); env && *env) cfg.data_dir = env;
  cfg.validate();
  if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-range distillation laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_flag("-v,--verbose", o.verbose, "Progress messages on stderr");
  app.add_flag("-q,--quiet", o.quiet, "Suppress warnings");

  auto common = [&o](CLI::App* cmd, bool with_lead) {
    cmd->add_option("--config", o.config, "Experiment configuration (INI)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Override experiment.seed");
    cmd->add_option("--out", o.out, "Override experiment.out");
    cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::NonNegativeNumber);
    if (with_lead) {
      cmd->add_option("--lead", o.lead, "Lead label")->check(CLI::IsMember({"medium", "s2s", "seasonal"}));
    }
  };
  auto* generate = app.add_subcommand("generate", "Generate the teacher corpus, nature run and climatologies");
  auto* train = app.add_subcommand("train", "Train the diffusion student for one lead");
  auto* calibrate = app.add_subcommand("calibrate", "Classifier-free guidance sweep on the medium-range student");
  auto* perfect = app.add_subcommand("perfect-model", "Perfect-model evaluation against the nature run");
  auto* scaling = app.add_subcommand("scaling", "Training-set size scaling study");
  auto* finetune = app.add_subcommand("finetune-eval", "Fine-tune onto a shifted domain and evaluate");
  auto* qr = app.add_subcommand("qr-baseline", "Quintile classification baseline");
  auto* report = app.add_subcommand("report", "Consolidated JSON, CSV and SVG report");
  for (auto* c : {generate, calibrate, perfect, scaling, finetune}) common(c, false);
  common(train, true);
  common(qr, true);
  common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(lrd::ExitCode::kConfigError);
  }
  lrd::log::set_level(o.quiet ? lrd::log::Level::kQuiet : o.verbose ? lrd::log::Level::kInfo : lrd::log::Level::kWarn);

  try {
    const auto cfg = load(o);
    if (*generate) lrd::exp::cmd_generate(cfg);
    if (*train) lrd::exp::cmd_train(cfg, cfg.lead);
    if (*calibrate) lrd::exp::cmd_calibrate(cfg);
    if (*perfect) lrd::exp::cmd_perfect_model(cfg);
    if (*scaling) lrd::exp::cmd_scaling(cfg);
    if (*finetune) lrd::exp::cmd_finetune_eval(cfg);
    if (*qr) lrd::exp::cmd_qr_baseline(cfg, cfg.lead);
    if (*report) lrd::exp::cmd_report(cfg.out_dir);
  } catch (const lrd::Error& e) {
    std::cerr << "lrd: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::invalid_argument& e) {
    std::cerr << "lrd: invalid input: " << e.what() << '\n';
    return static_cast<int>(lrd::ExitCode::kConfigError);
  } catch (const std::exception& e) {
    std::cerr << "lrd: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
