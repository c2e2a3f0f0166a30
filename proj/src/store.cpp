#include "lrd/store.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "lrd/error.hpp"

namespace lrd::store {

namespace {

static_assert(std::endian::native == std::endian::little, "store assumes a little-endian host");

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("store: truncated file");
  return v;
}

template <class T>
void put_array(std::ostream& os, const T* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void get_array(std::istream& is, T* data, std::size_t n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw std::runtime_error("store: truncated file");
}

void check_magic(std::istream& is, const char (&magic)[5], const fs::path& path) {
  std::array<char, 4> m{};
  is.read(m.data(), 4);
  if (!is || std::memcmp(m.data(), magic, 4) != 0) {
    throw std::runtime_error("store: bad magic in " + path.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("store: cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError(path.string());
  return is;
}

}  // namespace

void write_frames(const fs::path& path, const datagen::Trajectory& traj) {
  auto os = open_out(path);
  os.write("LRD1", 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(traj.K));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(traj.num_frames()));
  put_array(os, traj.frames.data(), traj.frames.size());
}

datagen::Trajectory read_frames(const fs::path& path) {
  auto is = open_in(path);
  check_magic(is, "LRD1", path);
  datagen::Trajectory t;
  t.K = get<std::uint32_t>(is);
  const auto n = get<std::uint32_t>(is);
  t.frames.resize(static_cast<std::size_t>(n) * t.K);
  get_array(is, t.frames.data(), t.frames.size());
  t.stable_up_to = n;
  return t;
}

void write_climatology(const fs::path& path, const targets::Climatology& clim) {
  auto os = open_out(path);
  os.write("LRCL", 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(clim.K));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(datagen::kDaysPerYear));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(clim.years));
  std::vector<float> buf(clim.deterministic.begin(), clim.deterministic.end());
  put_array(os, buf.data(), buf.size());
  buf.assign(clim.probabilistic.begin(), clim.probabilistic.end());
  put_array(os, buf.data(), buf.size());
}

targets::Climatology read_climatology(const fs::path& path, const targets::LeadSpec& lead) {
  auto is = open_in(path);
  check_magic(is, "LRCL", path);
  targets::Climatology c;
  c.K = get<std::uint32_t>(is);
  const auto days = get<std::uint32_t>(is);
  if (days != datagen::kDaysPerYear) throw std::runtime_error("store: climatology day count mismatch");
  c.years = get<std::uint32_t>(is);
  c.lead = lead;
  std::vector<float> buf(days * c.K);
  get_array(is, buf.data(), buf.size());
  c.deterministic.assign(buf.begin(), buf.end());
  buf.resize(days * c.years * c.K);
  get_array(is, buf.data(), buf.size());
  c.probabilistic.assign(buf.begin(), buf.end());
  return c;
}

void write_states(const fs::path& path, const std::vector<dynsys::SystemState>& states) {
  auto os = open_out(path);
  os.write("LRDS", 4);
  const std::uint32_t nx = states.empty() ? 0 : static_cast<std::uint32_t>(states.front().X.size());
  const std::uint32_t ny = states.empty() ? 0 : static_cast<std::uint32_t>(states.front().Y.size());
  put(os, nx);
  put(os, ny);
  put<std::uint64_t>(os, states.size());
  for (const auto& s : states) {
    put(os, s.t);
    put_array(os, s.X.data(), nx);
    put_array(os, s.Y.data(), ny);
  }
}

std::vector<dynsys::SystemState> read_states(const fs::path& path) {
  auto is = open_in(path);
  check_magic(is, "LRDS", path);
  const auto nx = get<std::uint32_t>(is);
  const auto ny = get<std::uint32_t>(is);
  const auto n = get<std::uint64_t>(is);
  std::vector<dynsys::SystemState> out(n);
  for (auto& s : out) {
    s.t = get<double>(is);
    s.X.resize(nx);
    s.Y.resize(ny);
    get_array(is, s.X.data(), nx);
    get_array(is, s.Y.data(), ny);
  }
  return out;
}

nlohmann::json to_json(const dynsys::SystemParams& p) {
  return {{"K", p.K},           {"J", p.J},   {"F0", p.F0}, {"A_seas", p.A_seas},
          {"T_seas", p.T_seas}, {"h", p.h},   {"c", p.c},   {"b", p.b},
          {"dt", p.dt},         {"step_equiv", p.step_equiv}};
}

dynsys::SystemParams params_from_json(const nlohmann::json& j) {
  dynsys::SystemParams p;
  p.K = j.at("K");
  p.J = j.at("J");
  p.F0 = j.at("F0");
  p.A_seas = j.at("A_seas");
  p.T_seas = j.at("T_seas");
  p.h = j.at("h");
  p.c = j.at("c");
  p.b = j.at("b");
  p.dt = j.at("dt");
  p.step_equiv = j.at("step_equiv");
  return p;
}

nlohmann::json to_json(const datagen::GenerationConfig& c) {
  return {{"num_members", c.num_members},
          {"base_seed", c.base_seed},
          {"duration_years", c.duration_years},
          {"spinup_years", c.spinup_years},
          {"save_window", c.save_window},
          {"instability_threshold", c.instability_threshold}};
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  nlohmann::json members = nlohmann::json::array();
  nlohmann::json train = nlohmann::json::array();
  nlohmann::json validation = nlohmann::json::array();
  nlohmann::json pruned = nlohmann::json::array();
  for (const auto& r : m.members) {
    members.push_back({{"id", r.id},
                       {"seed", r.seed},
                       {"file", r.file},
                       {"frames", r.frames},
                       {"first_day", r.first_day},
                       {"day_length", r.day_length},
                       {"stable_up_to", r.stable_up_to},
                       {"split", r.split}});
    if (r.split == "train") train.push_back(r.id);
    if (r.split == "validation") validation.push_back(r.id);
    if (r.split == "pruned") pruned.push_back(r.id);
  }
  nlohmann::json j;
  j["format"] = "lrd-corpus";
  j["version"] = 1;
  j["teacher"] = to_json(m.teacher);
  j["generation"] = to_json(m.generation);
  j["train_frac"] = m.train_frac;
  j["members"] = members;
  j["split"] = {{"train", train}, {"validation", validation}};
  j["stability_report"] = {{"total", m.members.size()},
                           {"stable", m.members.size() - pruned.size()},
                           {"pruned", pruned},
                           {"instability_threshold", m.generation.instability_threshold}};
  j["normalizer"] = {{"mean", m.normalizer.mean}, {"std", m.normalizer.std}};
  j["extra"] = m.extra;
  fs::create_directories(dir);
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("store: cannot write manifest in " + dir.string());
  os << j.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw MissingInputError("corpus manifest " + path.string());
  const auto j = nlohmann::json::parse(is);
  Manifest m;
  m.teacher = params_from_json(j.at("teacher"));
  const auto& g = j.at("generation");
  m.generation.num_members = g.at("num_members");
  m.generation.base_seed = g.at("base_seed");
  m.generation.duration_years = g.at("duration_years");
  m.generation.spinup_years = g.at("spinup_years");
  m.generation.save_window = g.at("save_window");
  m.generation.instability_threshold = g.at("instability_threshold");
  m.train_frac = j.at("train_frac");
  for (const auto& r : j.at("members")) {
    MemberRecord rec;
    rec.id = r.at("id");
    rec.seed = r.at("seed");
    rec.file = r.at("file");
    rec.frames = r.at("frames");
    rec.first_day = r.at("first_day");
    rec.day_length = r.at("day_length");
    rec.stable_up_to = r.at("stable_up_to");
    rec.split = r.at("split");
    m.members.push_back(std::move(rec));
  }
  m.normalizer.mean = j.at("normalizer").at("mean");
  m.normalizer.std = j.at("normalizer").at("std");
  if (j.contains("extra")) m.extra = j.at("extra");
  return m;
}

void write_corpus(const fs::path& dir, Manifest manifest, const datagen::Split& split,
                  const std::vector<datagen::Trajectory>& all_members) {
  fs::create_directories(dir);
  manifest.members.clear();
  auto split_of = [&](int id) -> std::string {
    for (const auto& t : split.train) if (t.member_id == id) return "train";
    for (const auto& t : split.validation) if (t.member_id == id) return "validation";
    return "pruned";
  };
  for (const auto& t : all_members) {
    MemberRecord r;
    r.id = t.member_id;
    r.seed = t.seed;
    r.frames = t.num_frames();
    r.first_day = t.first_day;
    r.day_length = t.day_length;
    r.stable_up_to = t.stable_up_to;
    r.split = split_of(t.member_id);
    if (r.split != "pruned") {
      char name[32];
      std::snprintf(name, sizeof(name), "member_%05d.bin", t.member_id);
      r.file = name;
      write_frames(dir / r.file, t);
    }
    manifest.members.push_back(std::move(r));
  }
  write_manifest(dir, manifest);
}

datagen::Trajectory load_member(const fs::path& dir, const MemberRecord& record) {
  auto t = read_frames(dir / record.file);
  if (t.num_frames() != record.frames) {
    throw std::runtime_error("store: frame count of " + record.file + " disagrees with manifest");
  }
  t.member_id = record.id;
  t.seed = record.seed;
  t.first_day = record.first_day;
  t.day_length = record.day_length;
  t.stable_up_to = record.stable_up_to;
  return t;
}

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  c.manifest = read_manifest(dir);
  for (const auto& r : c.manifest.members) {
    if (r.split == "train") c.train.push_back(load_member(dir, r));
    if (r.split == "validation") c.validation.push_back(load_member(dir, r));
  }
  return c;
}

}  // namespace lrd::store
