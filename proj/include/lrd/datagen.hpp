#pragma once

// Large-ensemble teacher generation, instability pruning and member splits.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lrd/dynsys.hpp"

namespace lrd::datagen {

inline constexpr int kDaysPerYear = 360;

struct GenerationConfig {
  int num_members = 200;
  std::vector<std::uint64_t> init_seeds;  // one per member; derived from base_seed when empty
  std::uint64_t base_seed = 1;
  double duration_years = 52.0;  // includes spin-up; 360-day years
  double spinup_years = 2.0;
  int save_window = 4;      // teacher steps per saved frame
  double instability_threshold = 100.0;

  void validate() const;
  std::uint64_t seed_for(int member) const;
  std::size_t frames_per_member() const;
  std::int64_t spinup_days() const;
};

/// Daily-analog frames of the slow variables for one member. Frames are
/// float32 in time-major order; frame i covers absolute day first_day + i.
struct Trajectory {
  int member_id = 0;
  std::uint64_t seed = 0;
  std::size_t K = 0;
  std::int64_t first_day = 0;
  double day_length = 0.2;             // model time per frame
  std::vector<float> frames;            // [num_frames x K]
  std::size_t stable_up_to = 0;        // first unstable frame, or num_frames when clean

  std::size_t num_frames() const noexcept { return K == 0 ? 0 : frames.size() / K; }
  std::span<const float> frame(std::size_t i) const { return {frames.data() + i * K, K}; }
  std::span<float> frame(std::size_t i) { return {frames.data() + i * K, K}; }
  double frame_time(std::size_t i) const noexcept {
    return static_cast<double>(first_day + static_cast<std::int64_t>(i)) * day_length;
  }
  std::vector<double> frame_times() const;
  int day_of_year(std::size_t i) const noexcept {
    return static_cast<int>((first_day + static_cast<std::int64_t>(i)) % kDaysPerYear);
  }
  bool stable() const noexcept { return stable_up_to == num_frames(); }
};

/// Advances the full teacher state by one 6-hour-analog step.
using TeacherStep = std::function<void(dynsys::SystemState&)>;

/// Seeded initial state: X ~ F0 + N(0,1), Y ~ 0.1 N(0,1), t = 0.
dynsys::SystemState initial_state(std::uint64_t seed, const dynsys::SystemParams& params);

/// Integrate one member, discarding spin-up, saving means of save_window
/// consecutive teacher-step slow states. Instability is recorded in
/// stable_up_to; remaining frames are filled with NaN.
Trajectory run_member(std::uint64_t seed, const GenerationConfig& config,
                      const dynsys::SystemParams& params);
Trajectory run_member(std::uint64_t seed, const GenerationConfig& config,
                      const dynsys::SystemParams& params, const TeacherStep& step,
                      dynsys::SystemState initial);

/// A member with the full teacher state saved at the end of every frame:
/// snapshots[i] is the state reached after the last step of frame i.
struct NatureRun {
  Trajectory trajectory;
  std::vector<dynsys::SystemState> snapshots;
};

NatureRun run_nature(std::uint64_t seed, const GenerationConfig& config, const dynsys::SystemParams& params);

/// Integrates `days` frames forward from a snapshot with the same arithmetic as
/// run_member; returns [days x K] where row j is the frame j+1 days after the
/// snapshot's frame. Throws InstabilityError on blow-up.
std::vector<float> forecast_frames(const dynsys::SystemParams& params, dynsys::SystemState state, int days,
                                   int save_window);

/// Runs every member, one OpenMP worker per member; output ordered by member id.
std::vector<Trajectory> run_ensemble(const GenerationConfig& config, const dynsys::SystemParams& params);

/// First frame with a non-finite value or |value| > threshold.
std::optional<std::size_t> detect_instability(const Trajectory& traj, double threshold);

/// Overwrites one value; used by fault-injection tests and the generate smoke path.
void inject_fault(Trajectory& traj, std::size_t frame, float value);

struct Split {
  std::vector<Trajectory> train;
  std::vector<Trajectory> validation;
  std::vector<int> pruned_ids;
};

/// Drops unstable members and splits survivors by member id (lowest ids to train).
/// Throws std::invalid_argument for fewer than 4 members or an empty side, and
/// NumericError when fewer than 4 members survive.
Split prune_and_split(std::vector<Trajectory> members, double train_frac, double threshold);

}  // namespace lrd::datagen
