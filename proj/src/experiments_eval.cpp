// Guidance calibration and the perfect-model protocol.

#include <algorithm>
#include <cmath>
#include <exception>

#include "exp_internal.hpp"
#include "lrd/error.hpp"
#include "lrd/log.hpp"
#include "lrd/perturb.hpp"
#include "lrd/store.hpp"

namespace lrd::exp {

using nlohmann::json;
using targets::LeadLabel;

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json ensemble_scores(const verify::EnsembleSet& set) {
  const auto crps = verify::global_mean_series(verify::crps_field(set), set.cases, set.K);
  json j{{"crps", mean_of(crps)}, {"rmse", verify::ensemble_mean_rmse(set)}, {"members", set.members}};
  if (set.members >= 2) {
    j["spread"] = verify::ensemble_spread(set);
    j["spread_skill"] = verify::spread_skill_ratio(set);
  }
  return j;
}

}  // namespace

void cmd_calibrate(const config::ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path data = cfg.data_dir;
  const auto manifest = store::read_manifest(data);
  const int sw = manifest.generation.save_window;
  const auto ck = student::read_checkpoint(
      detail::resolve(cfg.out_dir, cfg.calibrate.checkpoint, "train_medium/checkpoint.bin"));
  const auto spec = ck.lead;
  const auto clim = store::read_climatology(climatology_path(data, spec.label), spec);
  const auto nature = detail::load_nature(data);

  const auto frames = case_frames(nature.run.trajectory, spec, sw, cfg.evaluation.spacing(spec.label),
                                  cfg.calibrate.cases);
  std::vector<sampler::ForecastCase> cases;
  for (auto n0 : frames) cases.push_back(make_case(nature.run.trajectory, n0, spec, sw, ck.normalizer));

  const sampler::StudentDenoiser den(ck.params, ck.sigma);
  const auto scfg = detail::sampler_config(cfg, ck.sigma);
  log::info("calibrate: " + std::to_string(cases.size()) + " cases, " + std::to_string(cfg.calibrate.weights.size()) +
            " guidance weights");
  const auto sweep = sampler::guidance_sweep(den, cases, ck.normalizer, cfg.calibrate.weights, scfg,
                                             stream_seed(cfg.seed, Stream::kCalibrate));

  const auto clim_set = detail::climatology_ensemble(clim, cases, false);
  const double clim_spread = verify::ensemble_spread(clim_set);
  const auto clim_crps = verify::global_mean_series(verify::crps_field(clim_set), clim_set.cases, clim_set.K);

  const fs::path dir = detail::stage_dir(cfg, "calibrate");
  {
    CsvWriter csv(dir / "sweep.csv", Provenance::of(cfg), {"guidance", "spread", "rmse", "crps", "spread_skill"});
    for (const auto& p : sweep) {
      csv << p.guidance << p.spread << p.rmse << p.crps << p.spread_skill;
      csv.end_row();
    }
  }

  // Structural checks of the sweep, evaluated in weight order.
  std::vector<std::size_t> order(sweep.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sweep[a].guidance < sweep[b].guidance; });
  bool monotone = true;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (sweep[order[i]].spread > sweep[order[i - 1]].spread) monotone = false;
  bool crosses = false;
  for (std::size_t i = 1; i < order.size(); ++i) {
    const double a = sweep[order[i - 1]].spread_skill - 1.0, b = sweep[order[i]].spread_skill - 1.0;
    if (a == 0.0 || b == 0.0 || (a < 0.0) != (b < 0.0)) crosses = true;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (sweep[i].crps < sweep[best].crps) best = i;
  json w0 = nullptr;
  for (const auto& p : sweep)
    if (p.guidance == 0.0) w0 = p.spread / clim_spread;

  auto summary = detail::provenance_json(cfg);
  summary["lead"] = detail::lead_name(spec.label);
  summary["cases"] = cases.size();
  summary["members"] = scfg.ensemble_size;
  summary["climatology_spread"] = clim_spread;
  summary["climatology_crps"] = mean_of(clim_crps);
  summary["w0_spread_ratio"] = w0;
  summary["spread_monotone_nonincreasing"] = monotone;
  summary["crps_argmin_guidance"] = sweep[best].guidance;
  summary["spread_skill_crosses_one"] = crosses;
  json pts = json::array();
  for (const auto& p : sweep)
    pts.push_back({{"guidance", p.guidance},
                   {"spread", p.spread},
                   {"rmse", p.rmse},
                   {"crps", p.crps},
                   {"spread_skill", p.spread_skill}});
  summary["sweep"] = pts;
  write_json(dir / "summary.json", summary);
}

void cmd_perfect_model(const config::ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path data = cfg.data_dir;
  const auto manifest = store::read_manifest(data);
  const int sw = manifest.generation.save_window;
  const auto& params = manifest.teacher;
  const auto ck = student::read_checkpoint(detail::resolve(cfg.out_dir, cfg.evaluation.checkpoint,
                                                           "train_" + detail::lead_name(cfg.lead) + "/checkpoint.bin"));
  const auto spec = ck.lead;
  if (spec.label != cfg.lead) {
    log::warn("perfect-model: checkpoint lead " + detail::lead_name(spec.label) + " differs from experiment.lead");
  }
  const auto& norm = ck.normalizer;
  const auto clim = store::read_climatology(climatology_path(data, spec.label), spec);
  const auto nature = detail::load_nature(data);
  const auto& truth_traj = nature.run.trajectory;
  for (const auto& r : manifest.members) {
    if (r.seed == nature.seed) throw ConfigError("nature run shares a seed with corpus member " + std::to_string(r.id));
  }
  const fs::path dir = detail::stage_dir(cfg, "perfect_model");

  // 1. Perturbation amplitude.
  double amplitude = cfg.perturb.amplitude;
  if (cfg.perturb.tune) {
    const auto medium = targets::LeadSpec::medium();
    const auto mclim = store::read_climatology(climatology_path(data, LeadLabel::kMedium), medium);
    perturb::TuningProblem tp;
    tp.params = params;
    tp.nature = &nature.run;
    tp.cases = case_frames(truth_traj, medium, sw, cfg.perturb.tuning_spacing_days, cfg.perturb.tuning_cases);
    tp.lead_days = medium.frame_offsets(sw).second;
    tp.save_window = sw;
    tp.physical_std = norm.std;
    tp.shape = detail::perturbation_shape(cfg, 1.0);
    tp.seed = stream_seed(cfg.seed, Stream::kTuning);
    double se = 0.0;
    for (auto n0 : tp.cases) {
      const auto t = targets::build_target(truth_traj, n0, medium, sw);
      const auto m = mclim.mean(truth_traj.day_of_year(n0));
      for (std::size_t k = 0; k < t.size(); ++k) se += (m[k] - t[k]) * (m[k] - t[k]);
    }
    const double clim_rmse = std::sqrt(se / static_cast<double>(tp.cases.size() * truth_traj.K));
    const double target = cfg.perturb.target_fraction * clim_rmse;
    log::info("perfect-model: tuning amplitude to RMSE " + format_number(target));
    const auto tr = perturb::tune_amplitude(tp, target, cfg.perturb.max_amplitude);
    amplitude = tr.amplitude;
    auto tj = detail::provenance_json(cfg);
    tj["amplitude"] = tr.amplitude;
    tj["achieved_rmse"] = tr.achieved_rmse;
    tj["target_rmse"] = target;
    tj["deterministic_climatology_rmse"] = clim_rmse;
    tj["target_fraction"] = cfg.perturb.target_fraction;
    tj["iterations"] = tr.iterations;
    tj["cases"] = tp.cases.size();
    tj["grid_amplitudes"] = tr.grid_amplitudes;
    tj["grid_rmse"] = tr.grid_rmse;
    write_json(dir / "tuning.json", tj);
  }

  // 2. Cases with imperfect initial conditions.
  const auto frames = case_frames(truth_traj, spec, sw, cfg.evaluation.spacing(spec.label), cfg.evaluation.cases);
  const std::size_t C = frames.size(), K = truth_traj.K;
  const perturb::NoiseGenerator unit_noise(detail::perturbation_shape(cfg, 1.0), K);
  std::vector<sampler::ForecastCase> cases(C);
  std::vector<std::vector<double>> ic_noise(C);
  for (std::size_t c = 0; c < C; ++c) {
    cases[c] = make_case(truth_traj, frames[c], spec, sw, norm);
    Rng rng(stream_seed(cfg.seed, Stream::kInitialConditions, c));
    ic_noise[c] = unit_noise.sample(rng, targets::kHistoryFrames);
    for (std::size_t i = 0; i < ic_noise[c].size(); ++i) cases[c].conditioning[i] += amplitude * ic_noise[c][i];
  }

  // 3. Teacher: perfect-IC run and the IC ensemble around the imperfect state.
  const auto Et = static_cast<std::size_t>(cfg.evaluation.teacher_members);
  verify::EnsembleSet teacher(C, Et, K);
  std::vector<double> perfect_rmse(C, 0.0);
  std::exception_ptr failure;
  log::info("perfect-model: teacher ensembles for " + std::to_string(C) + " cases");
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t c = 0; c < C; ++c) {
    try {
      const std::size_t n0 = frames[c];
      const auto& snap = nature.run.snapshots[n0];
      const auto anchor = truth_traj.frame(n0);
      const auto perfect = teacher_target(params, snap, anchor, spec, sw);
      double se = 0.0;
      for (std::size_t k = 0; k < K; ++k) se += (perfect[k] - cases[c].truth[k]) * (perfect[k] - cases[c].truth[k]);
      perfect_rmse[c] = std::sqrt(se / static_cast<double>(K));
      const auto imperfect =
          perturb::perturb_state(snap, std::span<const double>(ic_noise[c]).first(K), amplitude, norm.std);
      for (std::size_t m = 0; m < Et; ++m) {
        Rng rng(stream_seed(cfg.seed, Stream::kTeacherMembers, c * Et + m));
        const auto noise = unit_noise.sample(rng, 1);
        const auto member = perturb::perturb_state(imperfect, noise, amplitude, norm.std);
        const auto t = teacher_target(params, member, anchor, spec, sw);
        std::copy(t.begin(), t.end(), teacher.member(c, m).begin());
      }
      std::copy(cases[c].truth.begin(), cases[c].truth.end(), teacher.observed(c).begin());
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // 4. Student ensembles from the imperfect conditioning.
  const sampler::StudentDenoiser den(ck.params, ck.sigma);
  const auto scfg = detail::sampler_config(cfg, ck.sigma);
  log::info("perfect-model: student ensembles");
  const auto forecasts =
      sampler::forecast_cases(den, cases, norm, scfg, spec.label, stream_seed(cfg.seed, Stream::kStudentEnsemble));
  sampler::write_forecast_archive(dir / "forecasts", forecasts);
  const auto student_set = detail::to_ensemble_set(forecasts, cases);
  const auto det_set = detail::climatology_ensemble(clim, cases, true);
  const auto prob_set = detail::climatology_ensemble(clim, cases, false);

  // 5. Verification against the nature run.
  const auto f_student = verify::crps_field(student_set);
  const auto f_teacher = verify::crps_field(teacher);
  const auto f_det = verify::crps_field(det_set);
  const auto f_prob = verify::crps_field(prob_set);
  const auto g_student = verify::global_mean_series(f_student, C, K);
  const auto g_teacher = verify::global_mean_series(f_teacher, C, K);
  const auto g_det = verify::global_mean_series(f_det, C, K);
  const auto g_prob = verify::global_mean_series(f_prob, C, K);
  const auto mean_student = verify::ensemble_mean(student_set);
  const auto mean_teacher = verify::ensemble_mean(teacher);

  {
    CsvWriter csv(dir / "scores.csv", Provenance::of(cfg),
                  {"case", "init_frame", "day_of_year", "crps_student", "crps_teacher", "crps_det_clim",
                   "crps_prob_clim", "rmse_student", "rmse_teacher", "rmse_teacher_perfect_ic"});
    for (std::size_t c = 0; c < C; ++c) {
      double ss = 0.0, st = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double y = cases[c].truth[k];
        ss += (mean_student[c * K + k] - y) * (mean_student[c * K + k] - y);
        st += (mean_teacher[c * K + k] - y) * (mean_teacher[c * K + k] - y);
      }
      csv << c << frames[c] << cases[c].day_of_year << g_student[c] << g_teacher[c] << g_det[c] << g_prob[c]
          << std::sqrt(ss / static_cast<double>(K)) << std::sqrt(st / static_cast<double>(K)) << perfect_rmse[c];
      csv.end_row();
    }
  }

  const auto sig_det = verify::significance_map(f_student, f_det, C, K, cfg.evaluation.alpha);
  const auto sig_prob = verify::significance_map(f_student, f_prob, C, K, cfg.evaluation.alpha);
  const auto m_student = verify::time_mean_map(f_student, C, K);
  const auto m_teacher = verify::time_mean_map(f_teacher, C, K);
  const auto m_det = verify::time_mean_map(f_det, C, K);
  const auto m_prob = verify::time_mean_map(f_prob, C, K);
  std::size_t better_det = 0;
  {
    CsvWriter csv(dir / "significance.csv", Provenance::of(cfg),
                  {"gridpoint", "crps_student", "crps_teacher", "crps_det_clim", "crps_prob_clim", "p_vs_det_clim",
                   "significant_vs_det_clim", "p_vs_prob_clim", "significant_vs_prob_clim"});
    for (std::size_t k = 0; k < K; ++k) {
      if (sig_det.significant[k] && m_student[k] < m_det[k]) ++better_det;
      csv << k << m_student[k] << m_teacher[k] << m_det[k] << m_prob[k] << sig_det.pvalues[k]
          << static_cast<int>(sig_det.significant[k]) << sig_prob.pvalues[k] << static_cast<int>(sig_prob.significant[k]);
      csv.end_row();
    }
  }

  const int nb = cfg.evaluation.bootstrap;
  const auto pc_student = verify::percent_change(g_student, g_prob);
  const auto pc_teacher = verify::percent_change(g_teacher, g_prob);
  const auto pc_student_det = verify::percent_change(g_student, g_det);
  double max_perfect = 0.0;
  for (double r : perfect_rmse) max_perfect = std::max(max_perfect, r);

  auto report = detail::provenance_json(cfg);
  report["lead"] = detail::lead_name(spec.label);
  report["cases"] = C;
  report["amplitude"] = amplitude;
  report["student"] = ensemble_scores(student_set);
  report["teacher_ic_ensemble"] = ensemble_scores(teacher);
  report["deterministic_climatology"] = ensemble_scores(det_set);
  report["probabilistic_climatology"] = ensemble_scores(prob_set);
  report["teacher_perfect_ic_rmse"] = max_perfect;
  report["significance_vs_det_clim"] = {{"alpha", cfg.evaluation.alpha},
                                        {"fraction_significant", sig_det.fraction()},
                                        {"fraction_significant_better", static_cast<double>(better_det) / K}};
  report["significance_vs_prob_clim"] = {{"alpha", cfg.evaluation.alpha},
                                         {"fraction_significant", sig_prob.fraction()}};
  report["percent_change_vs_prob_clim"] = {
      {"student", detail::percent_change_json(pc_student, stream_seed(cfg.seed, Stream::kBootstrap, 0), nb)},
      {"teacher_ic_ensemble", detail::percent_change_json(pc_teacher, stream_seed(cfg.seed, Stream::kBootstrap, 1), nb)}};
  report["percent_change_vs_det_clim"] = {
      {"student", detail::percent_change_json(pc_student_det, stream_seed(cfg.seed, Stream::kBootstrap, 2), nb)}};
  write_json(dir / "report.json", report);
}

}  // namespace lrd::exp
