#pragma once

// On-disk dataset store.
//
// A corpus is one directory holding `manifest.json` and one binary file per
// stable member. Member files are a little-endian header (magic "LRD1",
// uint32 K, uint32 frame count) followed by float32 frames in time-major,
// row-major order. Climatologies ("LRCL") and full teacher state snapshots
// ("LRDS") use the same little-endian conventions.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrd/datagen.hpp"
#include "lrd/dynsys.hpp"
#include "lrd/targets.hpp"

namespace lrd::store {

namespace fs = std::filesystem;

void write_frames(const fs::path& path, const datagen::Trajectory& traj);
/// Reads K and frames; metadata fields are left at their defaults.
datagen::Trajectory read_frames(const fs::path& path);

void write_climatology(const fs::path& path, const targets::Climatology& clim);
targets::Climatology read_climatology(const fs::path& path, const targets::LeadSpec& lead);

void write_states(const fs::path& path, const std::vector<dynsys::SystemState>& states);
std::vector<dynsys::SystemState> read_states(const fs::path& path);

nlohmann::json to_json(const dynsys::SystemParams& p);
dynsys::SystemParams params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const datagen::GenerationConfig& c);

struct MemberRecord {
  int id = 0;
  std::uint64_t seed = 0;
  std::string file;  // empty for pruned members
  std::size_t frames = 0;
  std::int64_t first_day = 0;
  double day_length = 0.2;
  std::size_t stable_up_to = 0;
  std::string split;  // "train", "validation" or "pruned"
};

struct Manifest {
  dynsys::SystemParams teacher;
  datagen::GenerationConfig generation;
  double train_frac = 0.75;
  std::vector<MemberRecord> members;
  targets::Normalizer normalizer;
  nlohmann::json extra = nlohmann::json::object();
};

void write_manifest(const fs::path& dir, const Manifest& manifest);
/// Throws MissingInputError when the directory or manifest is absent.
Manifest read_manifest(const fs::path& dir);

/// Writes member files for stable members and the manifest.
void write_corpus(const fs::path& dir, Manifest manifest, const datagen::Split& split,
                  const std::vector<datagen::Trajectory>& all_members);

struct Corpus {
  Manifest manifest;
  std::vector<datagen::Trajectory> train;
  std::vector<datagen::Trajectory> validation;
};

Corpus load_corpus(const fs::path& dir);

/// Loads one trajectory and restores its metadata from a manifest record.
datagen::Trajectory load_member(const fs::path& dir, const MemberRecord& record);

}  // namespace lrd::store
