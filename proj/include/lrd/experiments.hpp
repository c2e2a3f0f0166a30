#pragma once
// Experiment commands behind the `lrd` CLI. Each command reads its inputs
// from the data directory and the output directory, fails with
// MissingInputError when a prerequisite stage has not been run, and writes
// CSV/JSON whose rows carry (experiment id, config hash, seed).
//
// Layout:
//   <data>/manifest.json, member_*.bin      corpus (generate)
//   <data>/nature/{frames,states}.bin       held-out nature run (generate)
//   <data>/climatology_<lead>.bin           per-lead climatologies (generate)
//   <data>/daily_climatology.bin            per-day-of-year frame means (generate)
//   <out>/train_<lead>/                     checkpoint.bin, last.bin, curves.csv
//   <out>/calibrate/, perfect_model/, scaling/, finetune/, qr_<lead>/, report/

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrd/config.hpp"
#include "lrd/datagen.hpp"
#include "lrd/dynsys.hpp"
#include "lrd/sampler.hpp"
#include "lrd/targets.hpp"

namespace lrd::exp {

namespace fs = std::filesystem;

/// Provenance columns prepended to every score row.
struct Provenance {
  std::string id;
  std::string hash;
  std::uint64_t seed = 0;
  static Provenance of(const config::ExperimentConfig& cfg);
};

/// Minimal CSV writer; numbers are printed in shortest round-trip form.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const Provenance& prov, const std::vector<std::string>& columns);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(const std::string& v);
  CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
  void end_row();
  ~CsvWriter();

 private:
  struct Impl;
  Impl* impl_;
};

std::string format_number(double v);
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

/// Frames [begin, end) of a trajectory with day-of-year bookkeeping intact.
datagen::Trajectory slice(const datagen::Trajectory& traj, std::size_t begin, std::size_t end);

/// Initialization frames 3, 3 + spacing, ... (at most `count`) whose target
/// window fits in the stable part of traj. Throws ConfigError when fewer than
/// `count` fit.
std::vector<std::size_t> case_frames(const datagen::Trajectory& traj, const targets::LeadSpec& lead, int save_window,
                                     int spacing, int count);

sampler::ForecastCase make_case(const datagen::Trajectory& traj, std::size_t n0, const targets::LeadSpec& lead,
                                int save_window, const targets::Normalizer& norm);

/// Lead target from a teacher run started at the end of frame n0, using the
/// same summation as build_target. `anchor` is frame n0 (slot 0 of the
/// internal trajectory).
std::vector<double> teacher_target(const dynsys::SystemParams& params, const dynsys::SystemState& snapshot,
                                   std::span<const float> anchor, const targets::LeadSpec& lead, int save_window);

/// Mean over the target window of (target - source) daily climatology for an
/// initialization on day_of_year.
std::vector<double> window_shift(const targets::DailyClimatology& source, const targets::DailyClimatology& target,
                                 const targets::LeadSpec& lead, int save_window, int day_of_year);

void write_daily_climatology(const fs::path& path, const targets::DailyClimatology& clim);
targets::DailyClimatology read_daily_climatology(const fs::path& path);

fs::path climatology_path(const fs::path& data_dir, targets::LeadLabel lead);

/// Seed streams derived from the experiment seed.
enum class Stream : std::uint64_t {
  kGeneration = 11,
  kNature = 12,
  kTrain = 20,  // + lead index
  kCalibrate = 30,
  kTuning = 40,
  kInitialConditions = 41,
  kTeacherMembers = 42,
  kStudentEnsemble = 43,
  kBootstrap = 50,
  kScaling = 60,
  kRealWorld = 70,
  kFinetune = 71,
  kReforecast = 72,
  kQr = 80,
};
std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t sub = 0);

void cmd_generate(const config::ExperimentConfig& cfg);
void cmd_train(const config::ExperimentConfig& cfg, targets::LeadLabel lead);
void cmd_calibrate(const config::ExperimentConfig& cfg);
void cmd_perfect_model(const config::ExperimentConfig& cfg);
void cmd_scaling(const config::ExperimentConfig& cfg);
void cmd_finetune_eval(const config::ExperimentConfig& cfg);
void cmd_qr_baseline(const config::ExperimentConfig& cfg, targets::LeadLabel lead);
/// Collects every stage summary under out_dir into report/. Throws
/// MissingInputError when no stage output exists.
void cmd_report(const fs::path& out_dir);

}  // namespace lrd::exp
