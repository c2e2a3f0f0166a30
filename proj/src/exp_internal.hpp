#pragma once
// Helpers shared by the experiment command translation units.

#include <filesystem>
#include <string>
#include <vector>

#include "lrd/config.hpp"
#include "lrd/datagen.hpp"
#include "lrd/experiments.hpp"
#include "lrd/student.hpp"
#include "lrd/targets.hpp"
#include "lrd/verify.hpp"

namespace lrd::exp::detail {

struct Nature {
  datagen::NatureRun run;
  std::uint64_t seed = 0;
};

Nature load_nature(const fs::path& data_dir);

/// Configured path resolved against the output directory, or the default
/// relative path when empty.
fs::path resolve(const fs::path& out_dir, const std::string& configured, const std::string& fallback);

fs::path stage_dir(const config::ExperimentConfig& cfg, const std::string& name);

student::TrainConfig train_config(const config::ExperimentConfig& cfg, std::uint64_t seed);

sampler::SamplerConfig sampler_config(const config::ExperimentConfig& cfg, const student::SigmaSpec& sigma);

/// Perturbation amplitude: configured, or read from the perfect-model tuning.
double ic_amplitude(const config::ExperimentConfig& cfg);

perturb::PerturbationSpec perturbation_shape(const config::ExperimentConfig& cfg, double amplitude);

/// Probabilistic climatology as an ensemble for each case.
verify::EnsembleSet climatology_ensemble(const targets::Climatology& clim, std::span<const sampler::ForecastCase> cases,
                                         bool deterministic);

verify::EnsembleSet to_ensemble_set(std::span<const sampler::EnsembleForecast> forecasts,
                                    std::span<const sampler::ForecastCase> cases);

nlohmann::json provenance_json(const config::ExperimentConfig& cfg);

/// Mean, bootstrap CI and per-case series summary of a percent change.
nlohmann::json percent_change_json(const verify::PercentChange& pc, std::uint64_t seed, int n_boot);

std::string lead_name(targets::LeadLabel lead);

void write_curves(const fs::path& path, const config::ExperimentConfig& cfg,
                  const std::vector<student::CurvePoint>& curve);

}  // namespace lrd::exp::detail
