#include "lrd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lrd/error.hpp"
#include "lrd/rng.hpp"

namespace lrd::datagen {

void GenerationConfig::validate() const {
  if (num_members < 1) throw std::invalid_argument("GenerationConfig: num_members must be >= 1");
  if (!(duration_years > spinup_years && spinup_years >= 0.0) || frames_per_member() == 0) {
    throw std::invalid_argument("GenerationConfig: need duration_years > spinup_years >= 0");
  }
  if (save_window < 1) throw std::invalid_argument("GenerationConfig: save_window must be >= 1");
  if (!init_seeds.empty() && init_seeds.size() != static_cast<std::size_t>(num_members)) {
    throw std::invalid_argument("GenerationConfig: init_seeds must have one entry per member");
  }
}

std::uint64_t GenerationConfig::seed_for(int member) const {
  if (!init_seeds.empty()) return init_seeds.at(member);
  return child_seed(base_seed, static_cast<std::uint64_t>(member));
}

std::size_t GenerationConfig::frames_per_member() const {
  const auto total = std::llround(duration_years * kDaysPerYear) - spinup_days();
  return total > 0 ? static_cast<std::size_t>(total) : 0;
}

std::int64_t GenerationConfig::spinup_days() const { return std::llround(spinup_years * kDaysPerYear); }

std::vector<double> Trajectory::frame_times() const {
  std::vector<double> t(num_frames());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = frame_time(i);
  return t;
}

dynsys::SystemState initial_state(std::uint64_t seed, const dynsys::SystemParams& params) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  dynsys::SystemState s;
  s.X.resize(params.K);
  s.Y.resize(static_cast<std::size_t>(params.K) * params.J);
  for (double& x : s.X) x = params.F0 + normal(rng);
  for (double& y : s.Y) y = 0.1 * normal(rng);
  s.t = 0.0;
  return s;
}

Trajectory run_member(std::uint64_t seed, const GenerationConfig& config,
                      const dynsys::SystemParams& params) {
  dynsys::Integrator integ(params);
  return run_member(seed, config, params, [&integ](dynsys::SystemState& s) { integ.teacher_step(s); },
                    initial_state(seed, params));
}

Trajectory run_member(std::uint64_t seed, const GenerationConfig& config,
                      const dynsys::SystemParams& params, const TeacherStep& step,
                      dynsys::SystemState state) {
  config.validate();
  const std::size_t K = static_cast<std::size_t>(params.K);
  const int window = config.save_window;
  const std::int64_t spinup_days = config.spinup_days();
  const std::size_t num_frames = config.frames_per_member();

  Trajectory traj;
  traj.seed = seed;
  traj.K = K;
  traj.first_day = spinup_days;
  traj.day_length = window * params.step_equiv;
  traj.frames.assign(num_frames * K, std::numeric_limits<float>::quiet_NaN());
  traj.stable_up_to = num_frames;

  auto unstable = [&](const dynsys::SystemState& s) {
    for (double x : s.X) {
      if (!std::isfinite(x) || std::abs(x) > config.instability_threshold) return true;
    }
    return false;
  };

  try {
    for (std::int64_t d = 0; d < spinup_days; ++d) {
      for (int w = 0; w < window; ++w) step(state);
      if (unstable(state)) {
        traj.stable_up_to = 0;
        return traj;
      }
    }
    std::vector<double> acc(K);
    for (std::size_t f = 0; f < num_frames; ++f) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int w = 0; w < window; ++w) {
        for (std::size_t k = 0; k < K; ++k) acc[k] += state.X[k];
        step(state);
      }
      auto out = traj.frame(f);
      for (std::size_t k = 0; k < K; ++k) out[k] = static_cast<float>(acc[k] / window);
      if (unstable(state)) {
        // The frame just written is clean; blow-up begins in the next one.
        traj.stable_up_to = detect_instability(traj, config.instability_threshold).value_or(f + 1);
        return traj;
      }
    }
  } catch (const InstabilityError&) {
    traj.stable_up_to = detect_instability(traj, config.instability_threshold).value_or(0);
    return traj;
  }
  if (auto bad = detect_instability(traj, config.instability_threshold)) traj.stable_up_to = *bad;
  return traj;
}

NatureRun run_nature(std::uint64_t seed, const GenerationConfig& config, const dynsys::SystemParams& params) {
  NatureRun nr;
  dynsys::Integrator integ(params);
  const std::int64_t spinup_steps = config.spinup_days() * config.save_window;
  std::int64_t count = 0;
  auto step = [&](dynsys::SystemState& s) {
    integ.teacher_step(s);
    ++count;
    if (count > spinup_steps && (count - spinup_steps) % config.save_window == 0) nr.snapshots.push_back(s);
  };
  nr.trajectory = run_member(seed, config, params, step, initial_state(seed, params));
  nr.snapshots.resize(std::min(nr.snapshots.size(), nr.trajectory.num_frames()));
  return nr;
}

std::vector<float> forecast_frames(const dynsys::SystemParams& params, dynsys::SystemState state, int days,
                                   int save_window) {
  dynsys::Integrator integ(params);
  const std::size_t K = state.X.size();
  std::vector<float> out(static_cast<std::size_t>(days) * K);
  std::vector<double> acc(K);
  for (int d = 0; d < days; ++d) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int w = 0; w < save_window; ++w) {
      for (std::size_t k = 0; k < K; ++k) acc[k] += state.X[k];
      integ.teacher_step(state);
    }
    for (std::size_t k = 0; k < K; ++k) out[static_cast<std::size_t>(d) * K + k] = static_cast<float>(acc[k] / save_window);
  }
  return out;
}

std::vector<Trajectory> run_ensemble(const GenerationConfig& config, const dynsys::SystemParams& params) {
  config.validate();
  params.validate();
  std::vector<Trajectory> members(config.num_members);
#pragma omp parallel for schedule(dynamic, 1)
  for (int m = 0; m < config.num_members; ++m) {
    members[m] = run_member(config.seed_for(m), config, params);
    members[m].member_id = m;
  }
  return members;
}

std::optional<std::size_t> detect_instability(const Trajectory& traj, double threshold) {
  const std::size_t n = traj.num_frames();
  for (std::size_t f = 0; f < n; ++f) {
    for (float v : traj.frame(f)) {
      if (!std::isfinite(v) || std::abs(v) > threshold) return f;
    }
  }
  return std::nullopt;
}

void inject_fault(Trajectory& traj, std::size_t frame, float value) {
  if (frame >= traj.num_frames()) throw std::out_of_range("inject_fault: frame out of range");
  traj.frame(frame)[traj.K / 2] = value;
  traj.stable_up_to = std::min(traj.stable_up_to, frame);
}

Split prune_and_split(std::vector<Trajectory> members, double train_frac, double threshold) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw std::invalid_argument("prune_and_split: train_frac must lie strictly between 0 and 1");
  }
  Split split;
  std::vector<Trajectory> stable;
  for (auto& m : members) {
    if (m.stable_up_to < m.num_frames() || detect_instability(m, threshold)) {
      split.pruned_ids.push_back(m.member_id);
    } else {
      stable.push_back(std::move(m));
    }
  }
  if (members.size() < 4) throw std::invalid_argument("prune_and_split: need at least 4 members");
  if (stable.size() < 4) {
    throw NumericError("prune_and_split: only " + std::to_string(stable.size()) + " of " +
                       std::to_string(members.size()) + " members stayed stable");
  }
  std::sort(stable.begin(), stable.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.member_id < b.member_id; });
  std::sort(split.pruned_ids.begin(), split.pruned_ids.end());
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(stable.size())));
  if (n_train == 0 || n_train >= stable.size()) {
    throw std::invalid_argument("prune_and_split: split leaves train or validation empty");
  }
  for (std::size_t i = 0; i < stable.size(); ++i) {
    (i < n_train ? split.train : split.validation).push_back(std::move(stable[i]));
  }
  return split;
}

}  // namespace lrd::datagen
