#include "lrd/config.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lrd/error.hpp"

namespace lrd::config {

int EvalSettings::spacing(targets::LeadLabel lead) const {
  switch (lead) {
    case targets::LeadLabel::kMedium: return spacing_medium;
    case targets::LeadLabel::kS2S: return spacing_s2s;
    case targets::LeadLabel::kSeasonal: return spacing_seasonal;
  }
  return spacing_s2s;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + what);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad(key, value, "a number");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) bad(key, value, "a real number");
    return d;
  } catch (const std::logic_error&) {
    bad(key, value, "a real number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, value, "a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::map<std::string, Binding> bindings(ExperimentConfig& c) {
  std::map<std::string, Binding> m;
  auto num = [&m](const std::string& key, auto& field) {
    using T = std::remove_reference_t<decltype(field)>;
    m[key] = Binding{[&field, key](const std::string& v) {
                       if constexpr (std::is_floating_point_v<T>) {
                         field = parse_double(key, v);
                       } else {
                         field = parse_number<T>(key, v);
                       }
                     },
                     [&field] {
                       if constexpr (std::is_floating_point_v<T>) {
                         return fmt(field);
                       } else {
                         return std::to_string(field);
                       }
                     }};
  };
  auto str = [&m](const std::string& key, std::string& field) {
    m[key] = Binding{[&field](const std::string& v) { field = trim(v); }, [&field] { return field; }};
  };
  auto path = [&m](const std::string& key, std::filesystem::path& field) {
    m[key] = Binding{[&field](const std::string& v) { field = trim(v); }, [&field] { return field.string(); }};
  };
  auto flag = [&m](const std::string& key, bool& field) {
    m[key] = Binding{[&field, key](const std::string& v) { field = parse_bool(key, v); },
                     [&field] { return std::string(field ? "true" : "false"); }};
  };
  auto dlist = [&m](const std::string& key, std::vector<double>& field) {
    m[key] = Binding{[&field, key](const std::string& v) {
                       field.clear();
                       for (const auto& s : split_list(v)) field.push_back(parse_double(key, s));
                     },
                     [&field] {
                       std::string s;
                       for (std::size_t i = 0; i < field.size(); ++i) s += (i ? "," : "") + fmt(field[i]);
                       return s;
                     }};
  };

  str("experiment.id", c.id);
  num("experiment.seed", c.seed);
  path("experiment.out", c.out_dir);
  path("experiment.data_dir", c.data_dir);
  num("experiment.workers", c.workers);
  m["experiment.lead"] = Binding{
      [&c](const std::string& v) {
        try {
          c.lead = targets::parse_lead_label(trim(v));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("config key 'experiment.lead': ") + e.what());
        }
      },
      [&c] { return std::string(targets::to_string(c.lead)); }};

  auto& t = c.teacher;
  num("teacher.K", t.K);
  num("teacher.J", t.J);
  num("teacher.F0", t.F0);
  num("teacher.A_seas", t.A_seas);
  num("teacher.T_seas", t.T_seas);
  num("teacher.h", t.h);
  num("teacher.c", t.c);
  num("teacher.b", t.b);
  num("teacher.dt", t.dt);
  num("teacher.step_equiv", t.step_equiv);

  auto& g = c.generation;
  num("generation.members", g.num_members);
  num("generation.base_seed", g.base_seed);
  num("generation.duration_years", g.duration_years);
  num("generation.spinup_years", g.spinup_years);
  num("generation.save_window", g.save_window);
  num("generation.instability_threshold", g.instability_threshold);
  num("generation.train_frac", c.train_frac);
  m["generation.fault_members"] = Binding{[&c](const std::string& v) {
                                            c.fault_members.clear();
                                            for (const auto& s : split_list(v))
                                              c.fault_members.push_back(parse_number<int>("generation.fault_members", s));
                                          },
                                          [&c] {
                                            std::string s;
                                            for (std::size_t i = 0; i < c.fault_members.size(); ++i)
                                              s += (i ? "," : "") + std::to_string(c.fault_members[i]);
                                            return s;
                                          }};

  auto& s = c.student;
  num("student.width", s.width);
  num("student.depth", s.depth);
  num("student.kernel", s.kernel);
  num("student.steps", s.steps);
  num("student.batch", s.batch);
  num("student.lr", s.lr);
  num("student.finetune_lr", s.finetune_lr);
  num("student.dropout", s.dropout);
  num("student.eval_every", s.eval_every);
  num("student.eval_samples", s.eval_samples);
  num("student.train_years", s.train_years);
  num("student.sigma_min", s.sigma.sigma_min);
  num("student.sigma_max", s.sigma.sigma_max);
  num("student.sigma_data", s.sigma.sigma_data);

  auto& sm = c.sampler;
  num("sampler.steps", sm.num_steps);
  num("sampler.rho", sm.rho);
  num("sampler.guidance", sm.guidance);
  num("sampler.members", sm.ensemble_size);
  num("sampler.s_churn", sm.s_churn);

  auto& p = c.perturb;
  m["perturb.amplitude"] = Binding{[&p](const std::string& v) {
                                     if (trim(v) == "tune") {
                                       p.tune = true;
                                     } else {
                                       p.tune = false;
                                       p.amplitude = parse_double("perturb.amplitude", v);
                                     }
                                   },
                                   [&p] { return p.tune ? std::string("tune") : fmt(p.amplitude); }};
  num("perturb.length_scale", p.length_scale);
  num("perturb.time_scale", p.time_scale);
  num("perturb.target_fraction", p.target_fraction);
  num("perturb.tuning_cases", p.tuning_cases);
  num("perturb.tuning_spacing_days", p.tuning_spacing_days);
  num("perturb.max_amplitude", p.max_amplitude);

  auto& e = c.evaluation;
  num("evaluation.nature_years", e.nature_years);
  num("evaluation.cases", e.cases);
  num("evaluation.spacing_medium", e.spacing_medium);
  num("evaluation.spacing_s2s", e.spacing_s2s);
  num("evaluation.spacing_seasonal", e.spacing_seasonal);
  num("evaluation.climatology_years", e.climatology_years);
  num("evaluation.teacher_members", e.teacher_members);
  num("evaluation.alpha", e.alpha);
  num("evaluation.bootstrap", e.bootstrap);
  str("evaluation.checkpoint", e.checkpoint);

  dlist("calibrate.weights", c.calibrate.weights);
  num("calibrate.cases", c.calibrate.cases);
  str("calibrate.checkpoint", c.calibrate.checkpoint);

  dlist("scaling.years", c.scaling.years);
  num("scaling.steps", c.scaling.steps);
  num("scaling.eval_cases", c.scaling.eval_cases);
  num("scaling.members", c.scaling.members);

  auto& f = c.finetune;
  num("finetune.F0", f.F0);
  num("finetune.h", f.h);
  num("finetune.record_years", f.record_years);
  num("finetune.train_years", f.train_years);
  num("finetune.val_years", f.val_years);
  num("finetune.steps", f.steps);
  num("finetune.eval_spacing", f.eval_spacing);
  num("finetune.members", f.members);
  num("finetune.reforecast_members", f.reforecast_members);
  num("finetune.reforecast_years", f.reforecast_years);
  str("finetune.checkpoint", f.checkpoint);

  num("qr.steps", c.qr.steps);
  flag("qr.curriculum", c.qr.curriculum);
  num("qr.eval_cases", c.qr.eval_cases);
  return m;
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  auto copy = *this;
  std::string out;
  for (const auto& [key, b] : bindings(copy)) out += key + " = " + b.get() + "\n";
  return out;
}

std::string git_blob_sha1(const std::string& content) {
  const std::string obj = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(obj.data()), obj.size(), digest);
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  for (unsigned char d : digest) {
    s += hex[d >> 4];
    s += hex[d & 15];
  }
  return s;
}

std::string ExperimentConfig::hash() const {
  // Where outputs land and how many threads run them do not change results.
  std::istringstream is(canonical());
  std::string line, kept;
  while (std::getline(is, line)) {
    if (line.rfind("experiment.out ", 0) == 0 || line.rfind("experiment.data_dir ", 0) == 0 ||
        line.rfind("experiment.workers ", 0) == 0)
      continue;
    kept += line + "\n";
  }
  return git_blob_sha1(kept);
}

void ExperimentConfig::validate() const {
  try {
    teacher.validate();
    generation.validate();
    sampler.validate();
    student.sigma.validate();
    net::ArchSpec{student.width, student.depth, student.kernel, 5, 1, 5}.validate();
    perturb::PerturbationSpec{perturb.tune ? 1.0 : perturb.amplitude, perturb.length_scale, perturb.time_scale}
        .validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(train_frac > 0.0 && train_frac < 1.0, "generation.train_frac must lie in (0, 1)");
  require(student.steps >= 0 && student.batch >= 1 && student.eval_every >= 1 && student.eval_samples >= 1,
          "student: steps >= 0, batch >= 1, eval_every >= 1, eval_samples >= 1 required");
  require(student.lr > 0.0 && student.finetune_lr > 0.0, "student learning rates must be positive");
  require(student.dropout >= 0.0 && student.dropout <= 1.0, "student.dropout must lie in [0, 1]");
  require(student.train_years >= 0.0, "student.train_years must be >= 0");
  require(perturb.target_fraction > 0.0 && perturb.tuning_cases >= 1 && perturb.max_amplitude > 0.0,
          "perturb tuning settings must be positive");
  require(evaluation.cases >= 1 && evaluation.climatology_years >= 1 && evaluation.teacher_members >= 2,
          "evaluation: cases >= 1, climatology_years >= 1, teacher_members >= 2 required");
  require(evaluation.alpha > 0.0 && evaluation.alpha < 1.0, "evaluation.alpha must lie in (0, 1)");
  require(evaluation.spacing_medium >= 1 && evaluation.spacing_s2s >= 1 && evaluation.spacing_seasonal >= 1,
          "evaluation spacings must be >= 1");
  require(!calibrate.weights.empty() && calibrate.cases >= 1, "calibrate: weights and cases required");
  for (double w : calibrate.weights) require(w >= 0.0, "calibrate.weights must be >= 0");
  require(!scaling.years.empty() && scaling.steps >= 0 && scaling.members >= 2, "scaling settings invalid");
  for (double y : scaling.years) require(y > 0.0, "scaling.years must be positive");
  require(finetune.record_years > finetune.train_years + finetune.val_years && finetune.train_years > 0.0 &&
              finetune.val_years > 0.0,
          "finetune: record_years must exceed train_years + val_years");
  require(finetune.members >= 2 && finetune.reforecast_members >= 1 && finetune.reforecast_years >= 1 &&
              finetune.eval_spacing >= 1,
          "finetune ensemble settings invalid");
  for (int id : fault_members) require(id >= 0 && id < generation.num_members, "fault member id out of range");
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  auto binds = bindings(c);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = binds.find(full);
      if (it == binds.end()) throw ConfigError("unknown config key '" + full + "'");
      it->second.set(value.data());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingInputError("config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace lrd::config
