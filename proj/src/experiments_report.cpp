// Quintile baseline command and the consolidated report.

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "exp_internal.hpp"
#include "lrd/error.hpp"
#include "lrd/log.hpp"
#include "lrd/plot.hpp"
#include "lrd/qrbaseline.hpp"
#include "lrd/store.hpp"

namespace lrd::exp {

using nlohmann::json;

void cmd_qr_baseline(const config::ExperimentConfig& cfg, targets::LeadLabel lead) {
  cfg.validate();
  const fs::path data = cfg.data_dir;
  const auto corpus = store::load_corpus(data);
  const int sw = corpus.manifest.generation.save_window;
  const auto spec = targets::LeadSpec::for_label(lead);
  const auto& norm = corpus.manifest.normalizer;
  const auto clim = store::read_climatology(climatology_path(data, lead), spec);
  const auto edges = qr::fit_quintiles(clim);
  const auto nature = detail::load_nature(data);

  net::NetParams init;
  const net::NetParams* init_ptr = nullptr;
  if (cfg.qr.curriculum && lead != targets::LeadLabel::kMedium) {
    init = student::read_checkpoint(cfg.out_dir / "qr_medium" / "checkpoint.bin").params;
    init_ptr = &init;
  }

  const auto budget = static_cast<std::size_t>(std::llround(cfg.student.train_years * datagen::kDaysPerYear));
  const student::SampleSource train_src(corpus.train, spec, sw, norm, budget);
  const student::SampleSource val_src(corpus.validation, spec, sw, norm);
  const auto arch = qr::qr_arch(cfg.student.width, cfg.student.depth, cfg.student.kernel);
  auto tc = detail::train_config(cfg, stream_seed(cfg.seed, Stream::kQr, static_cast<std::uint64_t>(lead)));
  tc.steps = cfg.qr.steps;
  log::info("qr-baseline " + detail::lead_name(lead) + ": " + std::to_string(tc.steps) + " steps");
  const auto result = qr::qr_train(train_src, val_src, edges, arch, tc, init_ptr, [](const student::CurvePoint& p) {
    log::info("  step " + std::to_string(p.step) + " train " + format_number(p.train_loss) + " val " +
              format_number(p.val_loss));
  });

  // Held-out nature-run cases with labels from the physical targets.
  const auto frames = case_frames(nature.run.trajectory, spec, sw, cfg.evaluation.spacing(lead), cfg.qr.eval_cases);
  const std::size_t K = nature.run.trajectory.K;
  student::Batch batch;
  batch.size = frames.size();
  batch.K = K;
  std::vector<std::uint8_t> labels;
  for (auto n0 : frames) {
    const auto c = make_case(nature.run.trajectory, n0, spec, sw, norm);
    batch.conditioning.insert(batch.conditioning.end(), c.conditioning.begin(), c.conditioning.end());
    batch.phase.insert(batch.phase.end(), c.phase.begin(), c.phase.end());
    for (std::size_t k = 0; k < K; ++k) {
      batch.target.push_back(norm.apply(c.truth[k]));
      labels.push_back(static_cast<std::uint8_t>(qr::quintile_bin(edges.at(c.day_of_year, k), c.truth[k])));
    }
    batch.day_of_year.push_back(c.day_of_year);
  }
  const auto scores = qr::qr_evaluate(result.best, batch, labels);

  const fs::path dir = detail::stage_dir(cfg, "qr_" + detail::lead_name(lead));
  qr::write_edges(dir / "edges.bin", edges);
  student::Checkpoint ck;
  ck.model_kind = "quantile";
  ck.params = result.best;
  ck.step = result.best_step;
  ck.lead = spec;
  ck.normalizer = norm;
  student::write_checkpoint(dir / "checkpoint.bin", ck);
  detail::write_curves(dir / "curves.csv", cfg, result.curve);
  {
    CsvWriter csv(dir / "scores.csv", Provenance::of(cfg), {"case", "init_frame", "rps_model", "rps_climatology"});
    for (std::size_t c = 0; c < frames.size(); ++c) {
      csv << c << frames[c] << scores.rps_per_case[c] << scores.rps_clim_per_case[c];
      csv.end_row();
    }
  }
  auto summary = detail::provenance_json(cfg);
  summary["lead"] = detail::lead_name(lead);
  summary["curriculum"] = init_ptr != nullptr;
  summary["cases"] = frames.size();
  summary["cross_entropy"] = scores.cross_entropy;
  summary["rps_model"] = scores.rps_model;
  summary["rps_climatology"] = scores.rps_climatology;
  summary["rps_skill"] = scores.skill;
  summary["initial_val_cross_entropy"] = result.curve.front().val_loss;
  summary["best_val_cross_entropy"] = result.best_val;
  summary["best_step"] = result.best_step;
  write_json(dir / "summary.json", summary);
}

namespace {

/// Columns of a provenance-tagged CSV by header name.
std::map<std::string, std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError(path.string());
  std::map<std::string, std::vector<std::string>> cols;
  std::vector<std::string> names;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
  };
  if (std::getline(is, line)) names = split(line);
  while (std::getline(is, line)) {
    const auto fields = split(line);
    for (std::size_t i = 0; i < names.size() && i < fields.size(); ++i) cols[names[i]].push_back(fields[i]);
  }
  return cols;
}

std::vector<double> numbers(const std::vector<std::string>& v) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(std::stod(s));
  return out;
}

void save(const fs::path& path, const std::string& svg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << svg;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_number() || j.is_boolean()) {
    out.emplace_back(prefix, j);
  }
}

plot::LineChart curve_chart(const std::string& title, const std::vector<std::pair<std::string, fs::path>>& files) {
  plot::LineChart chart{title, "step", "loss", false, true, {}};
  for (const auto& [name, path] : files) {
    const auto c = read_csv(path);
    const auto steps = numbers(c.at("step"));
    chart.series.push_back({name + " train", steps, numbers(c.at("train_loss"))});
    chart.series.push_back({name + " val", steps, numbers(c.at("val_loss"))});
  }
  return chart;
}

}  // namespace

void cmd_report(const fs::path& out_dir) {
  const fs::path rdir = out_dir / "report";
  json report = json::object();
  std::vector<std::string> stages;
  if (fs::is_directory(out_dir)) {
    for (const auto& entry : fs::directory_iterator(out_dir)) {
      if (!entry.is_directory() || entry.path() == rdir) continue;
      const std::string name = entry.path().filename().string();
      for (const char* file : {"summary.json", "report.json"}) {
        if (fs::exists(entry.path() / file)) {
          report[name] = read_json(entry.path() / file);
          stages.push_back(name);
          break;
        }
      }
    }
  }
  if (report.empty()) throw MissingInputError("no stage outputs under " + out_dir.string());
  std::sort(stages.begin(), stages.end());
  fs::create_directories(rdir);
  write_json(rdir / "report.json", report);

  {
    std::ofstream os(rdir / "summary.csv");
    os << "experiment,config_hash,seed,stage,metric,value\n";
    for (const auto& s : stages) {
      const auto& j = report[s];
      std::vector<std::pair<std::string, json>> flat;
      flatten(j, "", flat);
      for (const auto& [k, v] : flat) {
        if (k == "seed") continue;
        const std::string value = v.is_boolean() ? (v.get<bool>() ? "1" : "0") : format_number(v.get<double>());
        os << j.value("experiment", "") << ',' << j.value("config_hash", "") << ','
           << (j.contains("seed") ? j.at("seed").dump() : "") << ',' << s << ',' << k << ',' << value << '\n';
      }
    }
  }

  for (const auto& s : stages) {
    const fs::path sdir = out_dir / s;
    if (s.rfind("train_", 0) == 0 || s.rfind("qr_", 0) == 0) {
      save(rdir / (s + "_curves.svg"), plot::render(curve_chart(s + " learning curves", {{s, sdir / "curves.csv"}})));
    }
  }
  if (report.contains("calibrate")) {
    const auto& j = report["calibrate"];
    plot::LineChart chart{"Guidance sweep", "guidance weight w", "value", false, false, {}};
    plot::Series spread{"spread", {}, {}}, rmse{"RMSE", {}, {}}, crps{"CRPS", {}, {}}, clim{"clim spread", {}, {}};
    for (const auto& p : j.at("sweep")) {
      spread.x.push_back(p.at("guidance"));
      spread.y.push_back(p.at("spread"));
      rmse.x.push_back(p.at("guidance"));
      rmse.y.push_back(p.at("rmse"));
      crps.x.push_back(p.at("guidance"));
      crps.y.push_back(p.at("crps"));
      clim.x.push_back(p.at("guidance"));
      clim.y.push_back(j.at("climatology_spread"));
    }
    chart.series = {spread, rmse, crps, clim};
    save(rdir / "calibrate.svg", plot::render(chart));
  }
  if (report.contains("scaling")) {
    const auto& rows = report["scaling"].at("rows");
    plot::LineChart loss{"Minimum validation loss vs training years", "training years", "loss", true, false, {}};
    plot::LineChart crps{"S2S CRPS vs training years", "training years", "CRPS", true, false, {}};
    plot::Series l{"min val loss", {}, {}}, c{"CRPS", {}, {}}, lo{"CI low", {}, {}}, hi{"CI high", {}, {}};
    for (const auto& r : rows) {
      l.x.push_back(r.at("years"));
      l.y.push_back(r.at("min_val_loss"));
      c.x.push_back(r.at("years"));
      c.y.push_back(r.at("s2s_crps"));
      lo.x.push_back(r.at("years"));
      lo.y.push_back(r.at("crps_ci").at(0));
      hi.x.push_back(r.at("years"));
      hi.y.push_back(r.at("crps_ci").at(1));
    }
    loss.series = {l};
    crps.series = {c, lo, hi};
    save(rdir / "scaling_loss.svg", plot::render(loss));
    save(rdir / "scaling_crps.svg", plot::render(crps));
    std::vector<std::pair<std::string, fs::path>> files;
    for (const auto& r : rows) {
      const std::string tag = format_number(r.at("years").get<double>());
      files.emplace_back(tag + "y", out_dir / "scaling" / ("curves_" + tag + ".csv"));
    }
    save(rdir / "scaling_curves.svg", plot::render(curve_chart("Scaling learning curves", files)));
  }
  if (report.contains("perfect_model") && fs::exists(out_dir / "perfect_model" / "significance.csv")) {
    const auto c = read_csv(out_dir / "perfect_model" / "significance.csv");
    const auto st = numbers(c.at("crps_student")), det = numbers(c.at("crps_det_clim")),
               prob = numbers(c.at("crps_prob_clim"));
    const auto sd = numbers(c.at("significant_vs_det_clim")), sp = numbers(c.at("significant_vs_prob_clim"));
    plot::Heatmap map{"Student CRPS minus climatology CRPS", {"vs det. clim", "vs prob. clim"}, {{}, {}}, {{}, {}}};
    for (std::size_t k = 0; k < st.size(); ++k) {
      map.values[0].push_back(st[k] - det[k]);
      map.values[1].push_back(st[k] - prob[k]);
      map.mask[0].push_back(sd[k] != 0);
      map.mask[1].push_back(sp[k] != 0);
    }
    save(rdir / "perfect_model_map.svg", plot::render(map));
  }
  if (report.contains("finetune")) {
    const auto& j = report["finetune"];
    plot::BarChart bars{"CRPS change vs probabilistic climatology", "percent", {}, {}, {}, {}};
    for (const auto& r : j.at("rows")) {
      bars.labels.push_back(r.at("model").get<std::string>() + " " + r.at("correction").get<std::string>());
      bars.values.push_back(r.at("pct_vs_prob_clim"));
      bars.lo.push_back(r.at("ci_lo"));
      bars.hi.push_back(r.at("ci_hi"));
    }
    save(rdir / "finetune_bars.svg", plot::render(bars));
    save(rdir / "finetune_curves.svg",
         plot::render(curve_chart("Fine-tuning vs from scratch", {{"finetuned", out_dir / "finetune" / "curves_finetuned.csv"},
                                                                 {"scratch", out_dir / "finetune" / "curves_scratch.csv"}})));
  }
  log::info("report: " + std::to_string(stages.size()) + " stages written to " + rdir.string());
}

}  // namespace lrd::exp
