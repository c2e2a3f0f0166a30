#pragma once

// Experiment configuration: an INI document whose defaults reproduce the
// reference training setup (batch 64, LR 1e-4 / 1e-5, dropout 0.1, noise
// range 0.002-200, 18 sampler steps, 32 members, guidance 1.0, 75/25 split).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lrd/datagen.hpp"
#include "lrd/dynsys.hpp"
#include "lrd/sampler.hpp"
#include "lrd/perturb.hpp"
#include "lrd/student.hpp"

namespace lrd::config {

struct StudentSettings {
  int width = 64;
  int depth = 6;
  int kernel = 5;
  int steps = 200000;
  int batch = 64;
  double lr = 1e-4;
  double finetune_lr = 1e-5;
  double dropout = 0.1;
  int eval_every = 2000;
  int eval_samples = 2048;
  double train_years = 0.0;  // frame budget in years; 0 = whole training split
  student::SigmaSpec sigma;
};

struct PerturbSettings {
  bool tune = true;
  double amplitude = 0.0;  // used when tune is false
  double length_scale = 4.0;
  double time_scale = 2.0;
  double target_fraction = 0.7;
  int tuning_cases = 100;
  int tuning_spacing_days = 2;
  double max_amplitude = 2.0;
};

struct EvalSettings {
  double nature_years = 8.0;  // after spin-up
  int cases = 400;
  int spacing_medium = 2;
  int spacing_s2s = 4;
  int spacing_seasonal = 8;
  int climatology_years = 20;
  int teacher_members = 32;
  double alpha = 0.05;
  int bootstrap = 1000;
  std::string checkpoint;  // empty: <out>/train_<lead>/checkpoint.bin

  int spacing(targets::LeadLabel lead) const;
};

struct CalibrateSettings {
  std::vector<double> weights{0.0, 0.5, 0.75, 1.0, 2.0, 3.0};
  int cases = 100;
  std::string checkpoint;  // empty: <out>/train_medium/checkpoint.bin
};

struct ScalingSettings {
  std::vector<double> years{10.0, 100.0, 1000.0, 10000.0};
  int steps = 20000;
  int eval_cases = 200;
  int members = 16;
};

struct FinetuneSettings {
  double F0 = 8.5;
  double h = 1.1;
  double record_years = 40.0;
  double train_years = 28.0;
  double val_years = 4.0;
  int steps = 5000;
  int eval_spacing = 12;
  int members = 16;
  int reforecast_members = 8;
  int reforecast_years = 20;
  std::string checkpoint;  // empty: <out>/train_s2s/checkpoint.bin
};

struct QrSettings {
  int steps = 20000;
  bool curriculum = false;  // start from the medium-range quantile model
  int eval_cases = 400;
};

struct ExperimentConfig {
  std::string id = "default";
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path data_dir = "data/default";
  targets::LeadLabel lead = targets::LeadLabel::kS2S;
  int workers = 0;  // 0: OpenMP default

  dynsys::SystemParams teacher;
  datagen::GenerationConfig generation;  // base_seed 0: derived from seed
  double train_frac = 0.75;
  std::vector<int> fault_members;  // members corrupted after generation (smoke tests)

  StudentSettings student;
  sampler::SamplerConfig sampler;
  PerturbSettings perturb;
  EvalSettings evaluation;
  CalibrateSettings calibrate;
  ScalingSettings scaling;
  FinetuneSettings finetune;
  QrSettings qr;

  ExperimentConfig() { generation.base_seed = 0; }

  /// Sorted `section.key = value` lines of every setting.
  std::string canonical() const;
  /// Git blob SHA-1 of canonical() without experiment.out, experiment.data_dir
  /// and experiment.workers.
  std::string hash() const;
  void validate() const;
};

/// Parses an INI file over the defaults. Unknown sections or keys and
/// malformed values raise ConfigError; a missing file raises MissingInputError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

/// Git-style object hash: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_sha1(const std::string& content);

}  // namespace lrd::config
