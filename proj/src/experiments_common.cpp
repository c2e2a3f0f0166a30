#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "exp_internal.hpp"
#include "lrd/error.hpp"
#include "lrd/log.hpp"
#include "lrd/store.hpp"

namespace lrd::exp {

using nlohmann::json;

Provenance Provenance::of(const config::ExperimentConfig& cfg) { return {cfg.id, cfg.hash(), cfg.seed}; }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct CsvWriter::Impl {
  std::ofstream os;
  std::string prefix;
  std::size_t columns = 0;
  std::size_t filled = 0;
  std::string row;
};

CsvWriter::CsvWriter(const fs::path& path, const Provenance& prov, const std::vector<std::string>& columns)
    : impl_(new Impl) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  impl_->os.open(path);
  if (!impl_->os) {
    delete impl_;
    throw std::runtime_error("cannot write " + path.string());
  }
  impl_->os << "experiment,config_hash,seed";
  for (const auto& c : columns) impl_->os << ',' << c;
  impl_->os << '\n';
  impl_->prefix = prov.id + "," + prov.hash + "," + std::to_string(prov.seed);
  impl_->columns = columns.size();
}

CsvWriter::~CsvWriter() { delete impl_; }

CsvWriter& CsvWriter::operator<<(double v) {
  impl_->row += ',' + format_number(v);
  ++impl_->filled;
  return *this;
}

CsvWriter& CsvWriter::operator<<(long long v) {
  impl_->row += ',' + std::to_string(v);
  ++impl_->filled;
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
  impl_->row += ',' + v;
  ++impl_->filled;
  return *this;
}

void CsvWriter::end_row() {
  if (impl_->filled != impl_->columns) {
    throw std::logic_error("CsvWriter: row has " + std::to_string(impl_->filled) + " fields, expected " +
                           std::to_string(impl_->columns));
  }
  impl_->os << impl_->prefix << impl_->row << '\n';
  impl_->row.clear();
  impl_->filled = 0;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError(path.string());
  return json::parse(is);
}

datagen::Trajectory slice(const datagen::Trajectory& traj, std::size_t begin, std::size_t end) {
  if (begin > end || end > traj.num_frames()) throw std::out_of_range("slice: bad frame range");
  datagen::Trajectory out;
  out.member_id = traj.member_id;
  out.seed = traj.seed;
  out.K = traj.K;
  out.first_day = traj.first_day + static_cast<std::int64_t>(begin);
  out.day_length = traj.day_length;
  out.frames.assign(traj.frames.begin() + static_cast<std::ptrdiff_t>(begin * traj.K),
                    traj.frames.begin() + static_cast<std::ptrdiff_t>(end * traj.K));
  out.stable_up_to = std::min(traj.stable_up_to, end) > begin ? std::min(traj.stable_up_to, end) - begin : 0;
  return out;
}

std::vector<std::size_t> case_frames(const datagen::Trajectory& traj, const targets::LeadSpec& lead, int save_window,
                                     int spacing, int count) {
  if (spacing < 1 || count < 1) throw ConfigError("case spacing and count must be positive");
  const auto horizon = static_cast<std::size_t>(lead.horizon_frames(save_window));
  std::vector<std::size_t> out;
  for (std::size_t n0 = targets::kHistoryFrames - 1;
       n0 + horizon < traj.stable_up_to && out.size() < static_cast<std::size_t>(count);
       n0 += static_cast<std::size_t>(spacing)) {
    out.push_back(n0);
  }
  if (out.size() < static_cast<std::size_t>(count)) {
    throw ConfigError("nature run supports only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                      " cases at spacing " + std::to_string(spacing) + "; raise evaluation.nature_years");
  }
  return out;
}

sampler::ForecastCase make_case(const datagen::Trajectory& traj, std::size_t n0, const targets::LeadSpec& lead,
                                int save_window, const targets::Normalizer& norm) {
  const auto s = targets::build_sample(traj, n0, lead, save_window);
  sampler::ForecastCase c;
  c.conditioning = s.conditioning.frames;
  norm.apply_inplace(c.conditioning);
  c.phase = s.conditioning.phase;
  c.truth = s.target;
  c.init_time = s.init_time;
  c.day_of_year = s.conditioning.day_of_year;
  return c;
}

std::vector<double> teacher_target(const dynsys::SystemParams& params, const dynsys::SystemState& snapshot,
                                   std::span<const float> anchor, const targets::LeadSpec& lead, int save_window) {
  const int days = lead.horizon_frames(save_window);
  const auto fc = datagen::forecast_frames(params, snapshot, days, save_window);
  datagen::Trajectory t;
  t.K = anchor.size();
  t.frames.assign(anchor.begin(), anchor.end());
  t.frames.insert(t.frames.end(), fc.begin(), fc.end());
  t.stable_up_to = t.num_frames();
  return targets::build_target(t, 0, lead, save_window);
}

std::vector<double> window_shift(const targets::DailyClimatology& source, const targets::DailyClimatology& target,
                                 const targets::LeadSpec& lead, int save_window, int day_of_year) {
  const auto [first, last] = lead.frame_offsets(save_window);
  std::vector<double> out(source.K, 0.0);
  for (int d = first; d <= last; ++d) {
    const int doy = (day_of_year + d) % datagen::kDaysPerYear;
    const auto s = source.at(doy);
    const auto t = target.at(doy);
    for (std::size_t k = 0; k < source.K; ++k) out[k] += t[k] - s[k];
  }
  for (double& v : out) v /= static_cast<double>(last - first + 1);
  return out;
}

void write_daily_climatology(const fs::path& path, const targets::DailyClimatology& clim) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("LRDC", 4);
  const auto K = static_cast<std::uint32_t>(clim.K);
  os.write(reinterpret_cast<const char*>(&K), sizeof K);
  os.write(reinterpret_cast<const char*>(clim.mean.data()),
           static_cast<std::streamsize>(clim.mean.size() * sizeof(double)));
}

targets::DailyClimatology read_daily_climatology(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError(path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "LRDC") throw std::runtime_error("bad daily climatology " + path.string());
  std::uint32_t K = 0;
  is.read(reinterpret_cast<char*>(&K), sizeof K);
  targets::DailyClimatology c;
  c.K = K;
  c.mean.resize(static_cast<std::size_t>(datagen::kDaysPerYear) * K);
  is.read(reinterpret_cast<char*>(c.mean.data()), static_cast<std::streamsize>(c.mean.size() * sizeof(double)));
  if (!is) throw std::runtime_error("truncated daily climatology " + path.string());
  return c;
}

fs::path climatology_path(const fs::path& data_dir, targets::LeadLabel lead) {
  return data_dir / ("climatology_" + std::string(targets::to_string(lead)) + ".bin");
}

std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t sub) {
  return child_seed(child_seed(seed, static_cast<std::uint64_t>(stream)), sub);
}

namespace detail {

Nature load_nature(const fs::path& data_dir) {
  const fs::path dir = data_dir / "nature";
  const json meta = read_json(dir / "nature.json");
  Nature n;
  n.run.trajectory = store::read_frames(dir / "frames.bin");
  n.run.snapshots = store::read_states(dir / "states.bin");
  auto& t = n.run.trajectory;
  t.member_id = -1;
  t.seed = meta.at("seed");
  t.first_day = meta.at("first_day");
  t.day_length = meta.at("day_length");
  t.stable_up_to = meta.at("stable_up_to");
  n.seed = t.seed;
  if (n.run.snapshots.size() != t.num_frames()) throw std::runtime_error("nature run: snapshot count mismatch");
  return n;
}

fs::path resolve(const fs::path& out_dir, const std::string& configured, const std::string& fallback) {
  if (configured.empty()) return out_dir / fallback;
  const fs::path p(configured);
  return p.is_absolute() ? p : out_dir / p;
}

fs::path stage_dir(const config::ExperimentConfig& cfg, const std::string& name) {
  const fs::path d = cfg.out_dir / name;
  fs::create_directories(d);
  return d;
}

student::TrainConfig train_config(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  student::TrainConfig t;
  t.steps = cfg.student.steps;
  t.batch = cfg.student.batch;
  t.lr = cfg.student.lr;
  t.dropout = cfg.student.dropout;
  t.eval_every = cfg.student.eval_every;
  t.eval_samples = cfg.student.eval_samples;
  t.seed = seed;
  return t;
}

sampler::SamplerConfig sampler_config(const config::ExperimentConfig& cfg, const student::SigmaSpec& sigma) {
  auto s = cfg.sampler;
  s.sigma_min = sigma.sigma_min;
  s.sigma_max = sigma.sigma_max;
  return s;
}

double ic_amplitude(const config::ExperimentConfig& cfg) {
  if (!cfg.perturb.tune) return cfg.perturb.amplitude;
  const fs::path p = cfg.out_dir / "perfect_model" / "tuning.json";
  if (!fs::exists(p)) throw MissingInputError(p.string() + " (run perfect-model first or set perturb.amplitude)");
  return read_json(p).at("amplitude").get<double>();
}

perturb::PerturbationSpec perturbation_shape(const config::ExperimentConfig& cfg, double amplitude) {
  perturb::PerturbationSpec s;
  s.amplitude = amplitude;
  s.length_scale = cfg.perturb.length_scale;
  s.time_scale = cfg.perturb.time_scale;
  return s;
}

verify::EnsembleSet climatology_ensemble(const targets::Climatology& clim, std::span<const sampler::ForecastCase> cases,
                                         bool deterministic) {
  const std::size_t E = deterministic ? 1 : clim.years;
  verify::EnsembleSet set(cases.size(), E, clim.K);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const int doy = cases[c].day_of_year;
    for (std::size_t e = 0; e < E; ++e) {
      const auto src = deterministic ? clim.mean(doy) : clim.member(doy, e);
      std::copy(src.begin(), src.end(), set.member(c, e).begin());
    }
    std::copy(cases[c].truth.begin(), cases[c].truth.end(), set.observed(c).begin());
  }
  return set;
}

verify::EnsembleSet to_ensemble_set(std::span<const sampler::EnsembleForecast> forecasts,
                                    std::span<const sampler::ForecastCase> cases) {
  if (forecasts.empty() || forecasts.size() != cases.size()) throw std::invalid_argument("to_ensemble_set: shape");
  verify::EnsembleSet set(cases.size(), forecasts.front().E, forecasts.front().K);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    std::copy(forecasts[c].members.begin(), forecasts[c].members.end(),
              set.values.begin() + static_cast<std::ptrdiff_t>(c * set.members * set.K));
    std::copy(cases[c].truth.begin(), cases[c].truth.end(), set.observed(c).begin());
  }
  return set;
}

json provenance_json(const config::ExperimentConfig& cfg) {
  return {{"experiment", cfg.id}, {"config_hash", cfg.hash()}, {"seed", cfg.seed}};
}

json percent_change_json(const verify::PercentChange& pc, std::uint64_t seed, int n_boot) {
  const auto [lo, hi] = verify::bootstrap_ci(pc.per_case, seed, n_boot);
  return {{"mean_percent", pc.mean}, {"ci_lo", lo}, {"ci_hi", hi}, {"cases", pc.per_case.size()}};
}

std::string lead_name(targets::LeadLabel lead) { return std::string(targets::to_string(lead)); }

void write_curves(const fs::path& path, const config::ExperimentConfig& cfg,
                  const std::vector<student::CurvePoint>& curve) {
  CsvWriter csv(path, Provenance::of(cfg), {"step", "train_loss", "val_loss"});
  for (const auto& p : curve) {
    csv << p.step << p.train_loss << p.val_loss;
    csv.end_row();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

void cmd_generate(const config::ExperimentConfig& cfg) {
  cfg.validate();
  const int sw = cfg.generation.save_window;
  auto gen = cfg.generation;
  if (gen.base_seed == 0) gen.base_seed = stream_seed(cfg.seed, Stream::kGeneration);
  log::info("generate: " + std::to_string(gen.num_members) + " members x " + format_number(gen.duration_years) +
            " years");
  auto members = datagen::run_ensemble(gen, cfg.teacher);
  for (int id : cfg.fault_members) {
    if (id < 0 || id >= gen.num_members) throw ConfigError("generation.fault_members: no member " + std::to_string(id));
    auto& t = members[static_cast<std::size_t>(id)];
    datagen::inject_fault(t, t.num_frames() / 2, std::numeric_limits<float>::quiet_NaN());
  }
  auto split = datagen::prune_and_split(members, cfg.train_frac, gen.instability_threshold);
  if (!split.pruned_ids.empty()) {
    std::string ids;
    for (int id : split.pruned_ids) ids += " " + std::to_string(id);
    log::warn("generate: pruned unstable members:" + ids);
  }

  store::Manifest manifest;
  manifest.teacher = cfg.teacher;
  manifest.generation = gen;
  manifest.train_frac = cfg.train_frac;
  manifest.normalizer = targets::Normalizer::fit(split.train);

  // Held-out nature run for the perfect-model protocol; its seed is checked
  // against the corpus so evaluation never sees a training member.
  std::uint64_t nature_seed = stream_seed(cfg.seed, Stream::kNature);
  for (int m = 0; m < gen.num_members; ++m) {
    if (gen.seed_for(m) == nature_seed) throw ConfigError("nature-run seed collides with a corpus member");
  }
  datagen::GenerationConfig ngen = gen;
  ngen.num_members = 1;
  ngen.init_seeds.clear();
  ngen.duration_years = gen.spinup_years + cfg.evaluation.nature_years;
  auto nature = datagen::run_nature(nature_seed, ngen, cfg.teacher);
  if (!nature.trajectory.stable()) throw NumericError("nature run went unstable");

  manifest.extra = {{"config_hash", cfg.hash()},
                    {"experiment", cfg.id},
                    {"seed", cfg.seed},
                    {"nature_seed", nature_seed},
                    {"fault_members", cfg.fault_members}};
  const fs::path data = cfg.data_dir;
  store::write_corpus(data, manifest, split, members);
  members.clear();
  members.shrink_to_fit();

  const fs::path ndir = data / "nature";
  fs::create_directories(ndir);
  store::write_frames(ndir / "frames.bin", nature.trajectory);
  store::write_states(ndir / "states.bin", nature.snapshots);
  write_json(ndir / "nature.json", {{"seed", nature_seed},
                                    {"first_day", nature.trajectory.first_day},
                                    {"day_length", nature.trajectory.day_length},
                                    {"frames", nature.trajectory.num_frames()},
                                    {"stable_up_to", nature.trajectory.stable_up_to},
                                    {"K", nature.trajectory.K}});

  for (auto lead : {targets::LeadLabel::kMedium, targets::LeadLabel::kS2S, targets::LeadLabel::kSeasonal}) {
    const auto spec = targets::LeadSpec::for_label(lead);
    const auto years = targets::available_years(split.train, spec, sw);
    const auto window = static_cast<std::size_t>(cfg.evaluation.climatology_years);
    if (years.size() < window) {
      log::warn("generate: only " + std::to_string(years.size()) + " reference years for the " +
                detail::lead_name(lead) + " climatology; skipped");
      continue;
    }
    store::write_climatology(climatology_path(data, lead), targets::compute_climatology(years, spec, sw, window));
  }
  write_daily_climatology(data / "daily_climatology.bin", targets::daily_climatology(split.train));
  log::info("generate: wrote " + data.string());
}

void cmd_train(const config::ExperimentConfig& cfg, targets::LeadLabel lead) {
  cfg.validate();
  const auto corpus = store::load_corpus(cfg.data_dir);
  const int sw = corpus.manifest.generation.save_window;
  const auto spec = targets::LeadSpec::for_label(lead);
  const auto& norm = corpus.manifest.normalizer;
  const auto budget = static_cast<std::size_t>(std::llround(cfg.student.train_years * datagen::kDaysPerYear));
  const student::SampleSource train_src(corpus.train, spec, sw, norm, budget);
  const student::SampleSource val_src(corpus.validation, spec, sw, norm);

  const auto arch = student::denoiser_arch(cfg.student.width, cfg.student.depth, cfg.student.kernel);
  const auto tc =
      detail::train_config(cfg, stream_seed(cfg.seed, Stream::kTrain, static_cast<std::uint64_t>(lead)));
  log::info("train " + detail::lead_name(lead) + ": " + std::to_string(train_src.size()) + " samples, " +
            std::to_string(tc.steps) + " steps");
  const auto result = student::train(train_src, val_src, cfg.student.sigma, arch, tc, nullptr,
                                     [](const student::CurvePoint& p) {
                                       log::info("  step " + std::to_string(p.step) + " train " +
                                                 format_number(p.train_loss) + " val " + format_number(p.val_loss));
                                     });

  const fs::path dir = detail::stage_dir(cfg, "train_" + detail::lead_name(lead));
  student::Checkpoint ck;
  ck.params = result.best;
  ck.step = result.best_step;
  ck.sigma = cfg.student.sigma;
  ck.lead = spec;
  ck.normalizer = norm;
  student::write_checkpoint(dir / "checkpoint.bin", ck);
  ck.params = result.last;
  ck.optimizer = result.optimizer;
  ck.step = result.curve.empty() ? 0 : result.curve.back().step;
  student::write_checkpoint(dir / "last.bin", ck);
  detail::write_curves(dir / "curves.csv", cfg, result.curve);
  auto summary = detail::provenance_json(cfg);
  summary["lead"] = detail::lead_name(lead);
  summary["best_step"] = result.best_step;
  summary["best_val_loss"] = result.best_val;
  summary["final_train_loss"] = result.curve.back().train_loss;
  summary["final_val_loss"] = result.curve.back().val_loss;
  summary["train_frames"] = train_src.frames_used();
  summary["train_samples"] = train_src.size();
  summary["parameters"] = result.best.size();
  write_json(dir / "summary.json", summary);
}

}  // namespace lrd::exp
