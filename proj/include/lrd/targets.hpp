#pragma once

// Long-range targets, conditioning windows, climatologies and the
// climatological domain shift.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrd/datagen.hpp"

namespace lrd::targets {

inline constexpr int kHistoryFrames = 4;

enum class LeadLabel { kMedium, kS2S, kSeasonal };

std::string_view to_string(LeadLabel label);
/// Accepts "medium", "s2s", "seasonal". Throws std::invalid_argument otherwise.
LeadLabel parse_lead_label(std::string_view text);

/// Lead N and averaging window M, both in teacher steps.
struct LeadSpec {
  int N = 0;
  int M = 0;
  LeadLabel label = LeadLabel::kS2S;

  static LeadSpec medium() { return {28, 4, LeadLabel::kMedium}; }
  static LeadSpec s2s() { return {112, 28, LeadLabel::kS2S}; }
  static LeadSpec seasonal() { return {336, 112, LeadLabel::kSeasonal}; }
  static LeadSpec for_label(LeadLabel label);

  void validate(int save_window) const;
  /// Inclusive day offsets (relative to the initialization frame) whose
  /// teacher-step centers lie in [N - M/2, N + M/2).
  std::pair<int, int> frame_offsets(int save_window) const;
  /// Frames needed after n0 for the target window (the last offset).
  int horizon_frames(int save_window) const { return frame_offsets(save_window).second; }

  bool operator==(const LeadSpec&) const = default;
};

/// (sin, cos) of 2*pi*day_of_year/360.
std::array<double, 2> seasonal_phase(int day_of_year);

struct Conditioning {
  std::vector<double> frames;   // [4 x K]: day offsets 0, -1, -2, -3
  std::array<double, 2> phase{};
  int day_of_year = 0;
};

struct TrainingSample {
  Conditioning conditioning;
  std::vector<double> target;  // [K]
  double init_time = 0.0;
  int member_id = 0;
  std::size_t init_frame = 0;
};

/// Mean of the M / save_window daily frames of the lead window. Throws
/// std::out_of_range when the window runs past the trajectory.
std::vector<double> build_target(const datagen::Trajectory& traj, std::size_t n0, const LeadSpec& spec,
                                 int save_window);

/// Frames n0, n0-1, n0-2, n0-3 and the seasonal phase of n0. Throws
/// std::out_of_range when n0 < 3.
Conditioning build_conditioning(const datagen::Trajectory& traj, std::size_t n0);

TrainingSample build_sample(const datagen::Trajectory& traj, std::size_t n0, const LeadSpec& spec,
                            int save_window);

/// Scalar affine standardization shared by every gridpoint of the ring.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const noexcept { return (x - mean) / std; }
  double invert(double z) const noexcept { return z * std + mean; }
  void apply_inplace(std::span<double> v) const noexcept {
    for (double& x : v) x = apply(x);
  }
  /// Mean and standard deviation over the stable frames of every trajectory.
  static Normalizer fit(std::span<const datagen::Trajectory> trajs);
};

/// Per-day-of-year climatology of a lead's targets over window_years
/// reference years. `probabilistic` keeps every year as an ensemble member.
struct Climatology {
  std::size_t K = 0;
  std::size_t years = 0;
  LeadSpec lead;
  std::vector<double> deterministic;  // [360 x K]
  std::vector<double> probabilistic;  // [360 x years x K]

  std::span<const double> mean(int day_of_year) const {
    return {deterministic.data() + static_cast<std::size_t>(day_of_year) * K, K};
  }
  std::span<const double> member(int day_of_year, std::size_t year) const {
    return {probabilistic.data() + (static_cast<std::size_t>(day_of_year) * years + year) * K, K};
  }
};

/// A reference year: trajectory and a year index counted from its first
/// frame that lies on day-of-year 0.
struct ReferenceYear {
  const datagen::Trajectory* traj = nullptr;
  std::size_t year = 0;
};

/// Enumerates every year of the given trajectories whose targets (for every
/// day-of-year) fit inside the trajectory, in trajectory order.
std::vector<ReferenceYear> available_years(std::span<const datagen::Trajectory> trajs, const LeadSpec& spec,
                                           int save_window);

/// Builds the climatology from the first window_years entries of `years`.
/// Throws std::invalid_argument when fewer are available.
Climatology compute_climatology(std::span<const ReferenceYear> years, const LeadSpec& spec, int save_window,
                                std::size_t window_years = 20);

/// Per-day-of-year mean of the daily frames, [360 x K].
struct DailyClimatology {
  std::size_t K = 0;
  std::vector<double> mean;  // [360 x K]

  std::span<const double> at(int day_of_year) const {
    return {mean.data() + static_cast<std::size_t>(day_of_year) * K, K};
  }
};

DailyClimatology daily_climatology(std::span<const datagen::Trajectory> trajs);

/// Subtracts (target_clim - source_clim) at each frame's day-of-year, moving
/// target-domain data onto the source domain's seasonal mean.
datagen::Trajectory climatological_shift(const datagen::Trajectory& traj, const DailyClimatology& source,
                                         const DailyClimatology& target);

/// Same shift applied to an already built sample.
TrainingSample climatological_shift(const TrainingSample& sample, const LeadSpec& spec, int save_window,
                                    const DailyClimatology& source, const DailyClimatology& target);

/// Valid initialization frames of a trajectory for a lead: enough history
/// and the whole target window inside the stable range.
std::vector<std::size_t> valid_init_frames(const datagen::Trajectory& traj, const LeadSpec& spec, int save_window,
                                           std::size_t stride = 1);

/// Frame index of (year, day_of_year) counted from the trajectory's first
/// frame that lies on day-of-year 0.
std::size_t frame_index(const datagen::Trajectory& traj, std::size_t year, int day_of_year);

}  // namespace lrd::targets
