// Domain-shift fine-tuning against a from-scratch twin, with reforecast bias
// correction and an operational teacher IC-ensemble reference.

#include <cmath>
#include <exception>
#include <functional>

#include "exp_internal.hpp"
#include "lrd/error.hpp"
#include "lrd/log.hpp"
#include "lrd/perturb.hpp"
#include "lrd/store.hpp"

namespace lrd::exp {

using nlohmann::json;

namespace {

struct EvalCase {
  int year = 0;
  int doy = 0;
  std::size_t n0 = 0;
};

/// Forecast (members in real-domain units) for one model at a list of cases.
using ForecastFn = std::function<std::vector<std::vector<double>>(std::span<const EvalCase>, int members,
                                                                  std::uint64_t seed)>;

struct ModelScores {
  std::string name;
  std::vector<double> crps_raw;        // per-case global mean
  std::vector<double> crps_corrected;
  double rmse_raw = 0, rmse_corrected = 0;
};

double rmse_of(const std::vector<std::vector<double>>& ens_means, const std::vector<std::vector<double>>& truth) {
  double se = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < truth.size(); ++c)
    for (std::size_t k = 0; k < truth[c].size(); ++k) {
      const double d = ens_means[c][k] - truth[c][k];
      se += d * d;
      ++n;
    }
  return std::sqrt(se / static_cast<double>(n));
}

std::vector<double> member_mean(const std::vector<double>& members, std::size_t K) {
  const std::size_t E = members.size() / K;
  std::vector<double> m(K, 0.0);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t k = 0; k < K; ++k) m[k] += members[e * K + k];
  for (double& v : m) v /= static_cast<double>(E);
  return m;
}

double case_crps(const std::vector<double>& members, std::span<const double> truth) {
  const std::size_t K = truth.size(), E = members.size() / K;
  std::vector<double> col(E);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t e = 0; e < E; ++e) col[e] = members[e * K + k];
    s += verify::crps_ensemble(col, truth[k]);
  }
  return s / static_cast<double>(K);
}

}  // namespace

void cmd_finetune_eval(const config::ExperimentConfig& cfg) {
  cfg.validate();
  const auto& ft = cfg.finetune;
  const fs::path data = cfg.data_dir;
  const auto manifest = store::read_manifest(data);
  const int sw = manifest.generation.save_window;
  const auto ck = student::read_checkpoint(
      detail::resolve(cfg.out_dir, ft.checkpoint, "train_" + detail::lead_name(cfg.lead) + "/checkpoint.bin"));
  const auto spec = ck.lead;
  const auto& norm = ck.normalizer;
  const auto base_daily = read_daily_climatology(data / "daily_climatology.bin");
  const double amplitude = detail::ic_amplitude(cfg);
  const int horizon = spec.horizon_frames(sw);
  const std::size_t K = static_cast<std::size_t>(manifest.teacher.K);
  constexpr std::size_t kYear = datagen::kDaysPerYear;

  const auto train_years = static_cast<std::size_t>(std::llround(ft.train_years));
  const auto val_years = static_cast<std::size_t>(std::llround(ft.val_years));
  const auto record_years = static_cast<std::size_t>(std::llround(ft.record_years));
  if (train_years + val_years >= record_years) throw ConfigError("finetune: no test years left in the record");
  if (train_years + val_years < static_cast<std::size_t>(ft.reforecast_years) + 1)
    throw ConfigError("finetune: reforecast window reaches before the record");
  if (train_years < static_cast<std::size_t>(cfg.evaluation.climatology_years) + 1)
    throw ConfigError("finetune: training years shorter than the climatology window");

  // "Real world": the teacher with shifted parameters, one record plus lead-out.
  auto real = manifest.teacher;
  real.F0 = ft.F0;
  real.h = ft.h;
  auto rg = manifest.generation;
  rg.num_members = 1;
  rg.init_seeds.clear();
  rg.duration_years =
      rg.spinup_years + static_cast<double>(record_years * kYear + static_cast<std::size_t>(horizon) + 1) / kYear;
  log::info("finetune: real-world record of " + std::to_string(record_years) + " years");
  const auto record = datagen::run_nature(stream_seed(cfg.seed, Stream::kRealWorld), rg, real);
  if (!record.trajectory.stable()) throw NumericError("real-world record went unstable");
  const auto& rtraj = record.trajectory;

  const std::size_t train_end = train_years * kYear, val_end = (train_years + val_years) * kYear;
  const auto real_train = slice(rtraj, 0, train_end);
  const auto real_daily = targets::daily_climatology(std::span(&real_train, 1));
  const auto shifted = targets::climatological_shift(rtraj, base_daily, real_daily);
  const auto s_train = slice(shifted, 0, train_end);
  const auto s_val = slice(shifted, train_end, val_end);
  const student::SampleSource train_src(std::span(&s_train, 1), spec, sw, norm);
  const student::SampleSource val_src(std::span(&s_val, 1), spec, sw, norm);

  // Fine-tuned model and the from-scratch twin on the same budget and eval sets.
  auto tc = detail::train_config(cfg, stream_seed(cfg.seed, Stream::kFinetune));
  tc.steps = ft.steps;
  auto progress = [](const char* tag) {
    return [tag](const student::CurvePoint& p) {
      log::info(std::string("  [") + tag + "] step " + std::to_string(p.step) + " train " +
                format_number(p.train_loss) + " val " + format_number(p.val_loss));
    };
  };
  auto ftc = tc;
  ftc.lr = cfg.student.finetune_lr;
  log::info("finetune: fine-tuning pretrained model");
  const auto tuned = student::finetune(ck.params, train_src, val_src, ck.sigma, ftc, progress("finetune"));
  log::info("finetune: training from-scratch twin");
  const auto scratch = student::train(train_src, val_src, ck.sigma, ck.params.arch, tc, nullptr, progress("scratch"));

  const fs::path dir = detail::stage_dir(cfg, "finetune");
  detail::write_curves(dir / "curves_finetuned.csv", cfg, tuned.curve);
  detail::write_curves(dir / "curves_scratch.csv", cfg, scratch.curve);
  for (const auto& [name, res] : {std::pair{"finetuned", &tuned}, std::pair{"scratch", &scratch}}) {
    student::Checkpoint out = ck;
    out.params = res->best;
    out.optimizer = {};
    out.step = res->best_step;
    student::write_checkpoint(dir / (std::string("checkpoint_") + name + ".bin"), out);
  }

  // Evaluation grid: test years x every eval_spacing days; reforecasts over
  // the preceding reforecast_years years at the same days of year.
  const auto valid = [&](std::size_t n0) {
    return n0 >= targets::kHistoryFrames - 1 && n0 + static_cast<std::size_t>(horizon) < rtraj.stable_up_to;
  };
  std::vector<EvalCase> test, refc;
  for (std::size_t y = train_years + val_years; y < record_years; ++y)
    for (int d = 0; d < static_cast<int>(kYear); d += ft.eval_spacing) {
      const auto n0 = targets::frame_index(rtraj, y, d);
      if (valid(n0)) test.push_back({static_cast<int>(y), d, n0});
    }
  if (test.size() < 10) throw ConfigError("finetune: fewer than 10 test cases");
  const int first_ref = static_cast<int>(train_years + val_years) - ft.reforecast_years;
  for (int y = first_ref; y < static_cast<int>(record_years) - 1; ++y)
    for (int d = 0; d < static_cast<int>(kYear); d += ft.eval_spacing) {
      const auto n0 = targets::frame_index(rtraj, static_cast<std::size_t>(y), d);
      if (valid(n0)) refc.push_back({y, d, n0});
    }

  const perturb::NoiseGenerator unit_noise(detail::perturbation_shape(cfg, 1.0), K);
  auto ic_noise = [&](const EvalCase& c) {
    Rng rng(stream_seed(cfg.seed, Stream::kInitialConditions, c.n0));
    return unit_noise.sample(rng, targets::kHistoryFrames);
  };
  auto truth_of = [&](const EvalCase& c) { return targets::build_target(rtraj, c.n0, spec, sw); };

  const auto scfg0 = detail::sampler_config(cfg, ck.sigma);
  auto student_fn = [&](const net::NetParams& params) -> ForecastFn {
    return [&, p = &params](std::span<const EvalCase> cs, int members, std::uint64_t seed) {
      std::vector<sampler::ForecastCase> fc;
      for (const auto& c : cs) {
        auto fcase = make_case(shifted, c.n0, spec, sw, norm);
        const auto noise = ic_noise(c);
        for (std::size_t i = 0; i < noise.size(); ++i) fcase.conditioning[i] += amplitude * noise[i];
        fc.push_back(std::move(fcase));
      }
      auto scfg = scfg0;
      scfg.ensemble_size = members;
      const sampler::StudentDenoiser den(*p, ck.sigma);
      const auto out = sampler::forecast_cases(den, fc, norm, scfg, spec.label, seed);
      std::vector<std::vector<double>> res;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        auto m = out[i].members;
        const auto shift = window_shift(base_daily, real_daily, spec, sw, cs[i].doy);
        for (std::size_t e = 0; e < out[i].E; ++e)
          for (std::size_t k = 0; k < K; ++k) m[e * K + k] += shift[k];
        res.push_back(std::move(m));
      }
      return res;
    };
  };
  ForecastFn teacher_fn = [&](std::span<const EvalCase> cs, int members, std::uint64_t seed) {
    std::vector<std::vector<double>> res(cs.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < cs.size(); ++i) {
      try {
        const auto& snap = record.snapshots[cs[i].n0];
        const auto imperfect = perturb::perturb_state(
            snap, std::span<const double>(ic_noise(cs[i])).first(K), amplitude, norm.std);
        std::vector<double> m(static_cast<std::size_t>(members) * K);
        for (int e = 0; e < members; ++e) {
          Rng rng(child_seed(seed, cs[i].n0 * 1000 + static_cast<std::size_t>(e)));
          const auto noise = unit_noise.sample(rng, 1);
          const auto t = teacher_target(real, perturb::perturb_state(imperfect, noise, amplitude, norm.std),
                                        rtraj.frame(cs[i].n0), spec, sw);
          std::copy(t.begin(), t.end(), m.begin() + static_cast<std::ptrdiff_t>(e) * static_cast<std::ptrdiff_t>(K));
        }
        res[i] = std::move(m);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    return res;
  };

  std::vector<std::vector<double>> truths;
  for (const auto& c : test) truths.push_back(truth_of(c));

  // Probabilistic climatology of the real record's first reference years.
  const auto ref_years = targets::available_years(std::span(&real_train, 1), spec, sw);
  const auto clim = targets::compute_climatology(ref_years, spec, sw,
                                                 static_cast<std::size_t>(cfg.evaluation.climatology_years));
  std::vector<double> crps_clim;
  std::vector<std::vector<double>> clim_means;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto cm = clim.mean(test[i].doy);
    clim_means.emplace_back(cm.begin(), cm.end());
    std::vector<double> m;
    for (std::size_t y = 0; y < clim.years; ++y) {
      const auto mm = clim.member(test[i].doy, y);
      m.insert(m.end(), mm.begin(), mm.end());
    }
    crps_clim.push_back(case_crps(m, truths[i]));
  }

  const std::vector<std::pair<std::string, ForecastFn>> models{
      {"finetuned", student_fn(tuned.best)}, {"scratch", student_fn(scratch.best)}, {"operational", teacher_fn}};
  std::vector<ModelScores> scores;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto& [name, fn] = models[mi];
    log::info("finetune: scoring " + name + " (" + std::to_string(refc.size()) + " reforecasts, " +
              std::to_string(test.size()) + " cases)");
    verify::ReforecastArchive archive(K);
    const auto rf = fn(refc, ft.reforecast_members, stream_seed(cfg.seed, Stream::kReforecast, mi));
    for (std::size_t i = 0; i < refc.size(); ++i) {
      archive.add(refc[i].year, refc[i].doy, member_mean(rf[i], K), truth_of(refc[i]));
    }
    const auto fc = fn(test, ft.members, stream_seed(cfg.seed, Stream::kStudentEnsemble, mi));
    ModelScores s;
    s.name = name;
    std::vector<std::vector<double>> mean_raw, mean_cor;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto corrected =
          verify::bias_correct(fc[i], K, test[i].year, test[i].doy, archive, static_cast<std::size_t>(ft.reforecast_years));
      s.crps_raw.push_back(case_crps(fc[i], truths[i]));
      s.crps_corrected.push_back(case_crps(corrected, truths[i]));
      mean_raw.push_back(member_mean(fc[i], K));
      mean_cor.push_back(member_mean(corrected, K));
    }
    s.rmse_raw = rmse_of(mean_raw, truths);
    s.rmse_corrected = rmse_of(mean_cor, truths);
    scores.push_back(std::move(s));
  }

  const Provenance prov = Provenance::of(cfg);
  {
    std::vector<std::string> cols{"case", "year", "day_of_year", "crps_prob_clim"};
    for (const auto& s : scores) {
      cols.push_back("crps_" + s.name + "_raw");
      cols.push_back("crps_" + s.name + "_corrected");
    }
    CsvWriter csv(dir / "scores.csv", prov, cols);
    for (std::size_t i = 0; i < test.size(); ++i) {
      csv << i << test[i].year << test[i].doy << crps_clim[i];
      for (const auto& s : scores) csv << s.crps_raw[i] << s.crps_corrected[i];
      csv.end_row();
    }
  }
  auto summary = detail::provenance_json(cfg);
  json rows = json::array();
  {
    CsvWriter csv(dir / "summary.csv", prov,
                  {"model", "correction", "crps", "rmse", "pct_vs_prob_clim", "ci_lo", "ci_hi"});
    double clim_mean = 0;
    for (double v : crps_clim) clim_mean += v;
    clim_mean /= static_cast<double>(crps_clim.size());
    csv << "prob_clim" << "none" << clim_mean << rmse_of(clim_means, truths) << 0.0 << 0.0 << 0.0;
    csv.end_row();
    std::uint64_t b = 0;
    for (const auto& s : scores) {
      for (bool corrected : {false, true}) {
        const auto& series = corrected ? s.crps_corrected : s.crps_raw;
        const auto pc = verify::percent_change(series, crps_clim);
        const auto pj = detail::percent_change_json(pc, stream_seed(cfg.seed, Stream::kBootstrap, 100 + b++),
                                                    cfg.evaluation.bootstrap);
        double mean = 0;
        for (double v : series) mean += v;
        mean /= static_cast<double>(series.size());
        const double rmse = corrected ? s.rmse_corrected : s.rmse_raw;
        const std::string tag = corrected ? "bias_corrected" : "raw";
        csv << s.name << tag << mean << rmse << pc.mean << pj.at("ci_lo").get<double>() << pj.at("ci_hi").get<double>();
        csv.end_row();
        rows.push_back({{"model", s.name},
                        {"correction", tag},
                        {"crps", mean},
                        {"rmse", rmse},
                        {"pct_vs_prob_clim", pc.mean},
                        {"ci_lo", pj.at("ci_lo")},
                        {"ci_hi", pj.at("ci_hi")}});
      }
    }
    summary["prob_clim_crps"] = clim_mean;
  }
  summary["rows"] = rows;
  summary["test_cases"] = test.size();
  summary["reforecasts"] = refc.size();
  summary["amplitude"] = amplitude;
  summary["finetuned_final_val_loss"] = tuned.curve.back().val_loss;
  summary["scratch_final_val_loss"] = scratch.curve.back().val_loss;
  summary["finetuned_min_val_loss"] = tuned.best_val;
  summary["scratch_min_val_loss"] = scratch.best_val;
  summary["pretrained_val_loss"] = tuned.curve.front().val_loss;
  write_json(dir / "summary.json", summary);
}

}  // namespace lrd::exp
