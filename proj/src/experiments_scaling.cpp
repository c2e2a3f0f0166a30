// Dataset-size scaling study.

#include <algorithm>
#include <cmath>

#include "exp_internal.hpp"
#include "lrd/error.hpp"
#include "lrd/log.hpp"
#include "lrd/store.hpp"

namespace lrd::exp {

using nlohmann::json;

namespace {

struct ScalingRow {
  double years = 0;
  double min_val_loss = 0;
  double val_ci_lo = 0, val_ci_hi = 0;
  int best_step = 0;
  double s2s_crps = 0;
  double ci_lo = 0, ci_hi = 0;
  double val_rise_pct = 0;     // final val loss above its minimum
  double train_drop_pct = 0;   // final train loss below its value at the val minimum
  double final_gap_pct = 0;    // final val loss above final train loss
  bool diverged = false;
};

/// Divergence statistics from a learning curve.
void curve_stats(const std::vector<student::CurvePoint>& curve, ScalingRow& row) {
  std::size_t imin = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].val_loss < curve[imin].val_loss) imin = i;
  const auto& last = curve.back();
  row.val_rise_pct = 100.0 * (last.val_loss / curve[imin].val_loss - 1.0);
  row.train_drop_pct = 100.0 * (1.0 - last.train_loss / curve[imin].train_loss);
  row.final_gap_pct = 100.0 * (last.val_loss - last.train_loss) / last.train_loss;
  row.diverged = row.val_rise_pct >= 5.0 && last.train_loss < curve[imin].train_loss;
}

std::vector<student::CurvePoint> curve_from_json(const json& j) {
  std::vector<student::CurvePoint> c;
  for (const auto& p : j) c.push_back({p.at(0).get<int>(), p.at(1).get<double>(), p.at(2).get<double>()});
  return c;
}

}  // namespace

void cmd_scaling(const config::ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path data = cfg.data_dir;
  const auto corpus = store::load_corpus(data);
  const int sw = corpus.manifest.generation.save_window;
  const auto spec = targets::LeadSpec::for_label(cfg.lead);
  const auto& norm = corpus.manifest.normalizer;
  const auto nature = detail::load_nature(data);
  const auto frames = case_frames(nature.run.trajectory, spec, sw, cfg.evaluation.spacing(spec.label),
                                  cfg.scaling.eval_cases);
  std::vector<sampler::ForecastCase> cases;
  for (auto n0 : frames) cases.push_back(make_case(nature.run.trajectory, n0, spec, sw, norm));

  const student::SampleSource val_src(corpus.validation, spec, sw, norm);
  const auto arch = student::denoiser_arch(cfg.student.width, cfg.student.depth, cfg.student.kernel);
  auto tc = detail::train_config(cfg, stream_seed(cfg.seed, Stream::kScaling));
  tc.steps = cfg.scaling.steps;
  auto scfg = detail::sampler_config(cfg, cfg.student.sigma);
  scfg.ensemble_size = cfg.scaling.members;
  const std::string hash = cfg.hash();
  const fs::path dir = detail::stage_dir(cfg, "scaling");

  auto years = cfg.scaling.years;
  std::sort(years.begin(), years.end());
  std::vector<ScalingRow> rows;
  for (std::size_t i = 0; i < years.size(); ++i) {
    ScalingRow row;
    row.years = years[i];
    const std::string tag = format_number(years[i]);
    const fs::path ck_path = dir / ("model_" + tag + ".bin");
    const fs::path run_path = dir / ("run_" + tag + ".json");
    std::vector<student::CurvePoint> curve;
    net::NetParams best;

    // A finished run with the same configuration is reused.
    bool cached = false;
    if (fs::exists(run_path) && fs::exists(ck_path)) {
      const auto rj = read_json(run_path);
      if (rj.value("config_hash", "") == hash) {
        curve = curve_from_json(rj.at("curve"));
        row.min_val_loss = rj.at("min_val_loss");
        row.val_ci_lo = rj.at("val_ci_lo");
        row.val_ci_hi = rj.at("val_ci_hi");
        row.best_step = rj.at("best_step");
        best = student::read_checkpoint(ck_path).params;
        cached = true;
        log::info("scaling: reusing " + tag + "-year run");
      }
    }
    if (!cached) {
      const auto budget = static_cast<std::size_t>(std::llround(years[i] * datagen::kDaysPerYear));
      const student::SampleSource train_src(corpus.train, spec, sw, norm, budget);
      log::info("scaling: " + tag + " years, " + std::to_string(train_src.size()) + " samples");
      auto result = student::train(train_src, val_src, cfg.student.sigma, arch, tc, nullptr,
                                   [&tag](const student::CurvePoint& p) {
                                     log::info("  [" + tag + "] step " + std::to_string(p.step) + " train " +
                                               format_number(p.train_loss) + " val " + format_number(p.val_loss));
                                   });
      curve = result.curve;
      best = result.best;
      row.min_val_loss = result.best_val;
      row.best_step = result.best_step;
      std::tie(row.val_ci_lo, row.val_ci_hi) =
          verify::bootstrap_ci(result.best_val_per_sample, stream_seed(cfg.seed, Stream::kBootstrap, 2 * i),
                               cfg.evaluation.bootstrap);
      student::Checkpoint ck;
      ck.params = result.best;
      ck.step = result.best_step;
      ck.sigma = cfg.student.sigma;
      ck.lead = spec;
      ck.normalizer = norm;
      student::write_checkpoint(ck_path, ck);
      json cj = json::array();
      for (const auto& p : curve) cj.push_back({p.step, p.train_loss, p.val_loss});
      write_json(run_path, {{"config_hash", hash},
                            {"min_val_loss", row.min_val_loss},
                            {"val_ci_lo", row.val_ci_lo},
                            {"val_ci_hi", row.val_ci_hi},
                            {"best_step", row.best_step},
                            {"train_samples", train_src.size()},
                            {"curve", cj}});
    }
    detail::write_curves(dir / ("curves_" + tag + ".csv"), cfg, curve);
    curve_stats(curve, row);

    const sampler::StudentDenoiser den(best, cfg.student.sigma);
    const auto fcs =
        sampler::forecast_cases(den, cases, norm, scfg, spec.label, stream_seed(cfg.seed, Stream::kStudentEnsemble));
    const auto set = detail::to_ensemble_set(fcs, cases);
    const auto crps = verify::global_mean_series(verify::crps_field(set), set.cases, set.K);
    double sum = 0.0;
    for (double v : crps) sum += v;
    row.s2s_crps = sum / static_cast<double>(crps.size());
    std::tie(row.ci_lo, row.ci_hi) =
        verify::bootstrap_ci(crps, stream_seed(cfg.seed, Stream::kBootstrap, 2 * i + 1), cfg.evaluation.bootstrap);
    rows.push_back(row);
  }

  {
    CsvWriter csv(dir / "scaling.csv", Provenance::of(cfg),
                  {"years", "min_val_loss", "s2s_crps", "ci_lo", "ci_hi", "val_ci_lo", "val_ci_hi", "best_step",
                   "val_rise_pct", "train_drop_pct", "final_gap_pct", "diverged"});
    for (const auto& r : rows) {
      csv << r.years << r.min_val_loss << r.s2s_crps << r.ci_lo << r.ci_hi << r.val_ci_lo << r.val_ci_hi
          << r.best_step << r.val_rise_pct << r.train_drop_pct << r.final_gap_pct << static_cast<int>(r.diverged);
      csv.end_row();
    }
  }

  // Nonincreasing minimum validation loss, tolerating inversions whose
  // bootstrap intervals overlap.
  int inversions = 0;
  bool inversions_within_ci = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].min_val_loss > rows[i - 1].min_val_loss) {
      ++inversions;
      if (rows[i].val_ci_lo > rows[i - 1].val_ci_hi) inversions_within_ci = false;
    }
  }
  auto summary = detail::provenance_json(cfg);
  summary["lead"] = detail::lead_name(spec.label);
  summary["steps"] = tc.steps;
  summary["eval_cases"] = cases.size();
  summary["min_val_inversions"] = inversions;
  summary["inversions_within_ci"] = inversions_within_ci;
  if (!rows.empty()) {
    const auto& a = rows.front();
    const auto& b = rows.back();
    summary["crps_smallest"] = a.s2s_crps;
    summary["crps_largest"] = b.s2s_crps;
    summary["crps_ci_disjoint"] = b.ci_hi < a.ci_lo;
    summary["smallest_diverged"] = a.diverged;
    summary["largest_final_gap_pct"] = b.final_gap_pct;
  }
  json rj = json::array();
  for (const auto& r : rows)
    rj.push_back({{"years", r.years},
                  {"min_val_loss", r.min_val_loss},
                  {"val_ci", {r.val_ci_lo, r.val_ci_hi}},
                  {"s2s_crps", r.s2s_crps},
                  {"crps_ci", {r.ci_lo, r.ci_hi}},
                  {"best_step", r.best_step},
                  {"val_rise_pct", r.val_rise_pct},
                  {"train_drop_pct", r.train_drop_pct},
                  {"final_gap_pct", r.final_gap_pct},
                  {"diverged", r.diverged}});
  summary["rows"] = rj;
  write_json(dir / "summary.json", summary);
}

}  // namespace lrd::exp
