#include "lrd/targets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lrd::targets {

using datagen::kDaysPerYear;
using datagen::Trajectory;

std::string_view to_string(LeadLabel label) {
  switch (label) {
    case LeadLabel::kMedium: return "medium";
    case LeadLabel::kS2S: return "s2s";
    case LeadLabel::kSeasonal: return "seasonal";
  }
  return "unknown";
}

LeadLabel parse_lead_label(std::string_view text) {
  if (text == "medium") return LeadLabel::kMedium;
  if (text == "s2s") return LeadLabel::kS2S;
  if (text == "seasonal") return LeadLabel::kSeasonal;
  throw std::invalid_argument("unknown lead label '" + std::string(text) + "'");
}

LeadSpec LeadSpec::for_label(LeadLabel label) {
  switch (label) {
    case LeadLabel::kMedium: return medium();
    case LeadLabel::kS2S: return s2s();
    case LeadLabel::kSeasonal: return seasonal();
  }
  throw std::invalid_argument("LeadSpec::for_label: bad label");
}

void LeadSpec::validate(int save_window) const {
  if (N <= 0) throw std::invalid_argument("LeadSpec: N must be positive");
  if (M < 1) throw std::invalid_argument("LeadSpec: M must be >= 1");
  if (save_window < 1 || M % save_window != 0) {
    throw std::invalid_argument("LeadSpec: M must be a multiple of save_window");
  }
  if (2 * N - M <= 0) throw std::invalid_argument("LeadSpec: N - M/2 must be positive");
}

std::pair<int, int> LeadSpec::frame_offsets(int save_window) const {
  validate(save_window);
  // Frame d spans teacher steps [d*w, d*w + w) with center d*w + (w-1)/2.
  // Work in doubled units to stay in integers.
  const int w = save_window;
  const int lo2 = 2 * N - M;  // 2 * (N - M/2)
  const int hi2 = 2 * N + M;
  auto center2 = [w](int d) { return 2 * d * w + (w - 1); };
  int first = 0;
  while (center2(first) < lo2) ++first;
  int last = first;
  while (center2(last + 1) < hi2) ++last;
  return {first, last};
}

std::array<double, 2> seasonal_phase(int day_of_year) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(day_of_year) / kDaysPerYear;
  return {std::sin(angle), std::cos(angle)};
}

std::vector<double> build_target(const Trajectory& traj, std::size_t n0, const LeadSpec& spec, int save_window) {
  const auto [first, last] = spec.frame_offsets(save_window);
  if (n0 + static_cast<std::size_t>(last) >= traj.num_frames()) {
    throw std::out_of_range("build_target: window exceeds trajectory end");
  }
  std::vector<double> out(traj.K, 0.0);
  for (int d = first; d <= last; ++d) {
    const auto f = traj.frame(n0 + static_cast<std::size_t>(d));
    for (std::size_t k = 0; k < traj.K; ++k) out[k] += static_cast<double>(f[k]);
  }
  const double n = static_cast<double>(last - first + 1);
  for (double& v : out) v /= n;
  return out;
}

Conditioning build_conditioning(const Trajectory& traj, std::size_t n0) {
  if (n0 < kHistoryFrames - 1) throw std::out_of_range("build_conditioning: insufficient history");
  if (n0 >= traj.num_frames()) throw std::out_of_range("build_conditioning: n0 past trajectory end");
  Conditioning c;
  c.frames.resize(kHistoryFrames * traj.K);
  for (int h = 0; h < kHistoryFrames; ++h) {
    const auto f = traj.frame(n0 - static_cast<std::size_t>(h));
    for (std::size_t k = 0; k < traj.K; ++k) c.frames[h * traj.K + k] = static_cast<double>(f[k]);
  }
  c.day_of_year = traj.day_of_year(n0);
  c.phase = seasonal_phase(c.day_of_year);
  return c;
}

TrainingSample build_sample(const Trajectory& traj, std::size_t n0, const LeadSpec& spec, int save_window) {
  TrainingSample s;
  s.conditioning = build_conditioning(traj, n0);
  s.target = build_target(traj, n0, spec, save_window);
  s.init_time = traj.frame_time(n0);
  s.member_id = traj.member_id;
  s.init_frame = n0;
  return s;
}

Normalizer Normalizer::fit(std::span<const Trajectory> trajs) {
  double sum = 0.0;
  double count = 0.0;
  for (const auto& t : trajs) {
    const std::size_t n = t.stable_up_to * t.K;
    for (std::size_t i = 0; i < n; ++i) sum += t.frames[i];
    count += static_cast<double>(n);
  }
  if (count < 2) throw std::invalid_argument("Normalizer::fit: no data");
  const double mean = sum / count;
  double ss = 0.0;
  for (const auto& t : trajs) {
    const std::size_t n = t.stable_up_to * t.K;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = t.frames[i] - mean;
      ss += d * d;
    }
  }
  return {mean, std::sqrt(ss / (count - 1.0))};
}

std::size_t frame_index(const Trajectory& traj, std::size_t year, int day_of_year) {
  const auto offset = static_cast<std::size_t>((kDaysPerYear - traj.day_of_year(0)) % kDaysPerYear);
  return offset + year * kDaysPerYear + static_cast<std::size_t>(day_of_year);
}

std::vector<ReferenceYear> available_years(std::span<const Trajectory> trajs, const LeadSpec& spec,
                                           int save_window) {
  const int last = spec.horizon_frames(save_window);
  std::vector<ReferenceYear> out;
  for (const auto& t : trajs) {
    for (std::size_t y = 0;; ++y) {
      const std::size_t end = frame_index(t, y, kDaysPerYear - 1) + static_cast<std::size_t>(last);
      if (end >= t.stable_up_to) break;
      out.push_back({&t, y});
    }
  }
  return out;
}

Climatology compute_climatology(std::span<const ReferenceYear> years, const LeadSpec& spec, int save_window,
                                std::size_t window_years) {
  if (window_years == 0 || years.size() < window_years) {
    throw std::invalid_argument("compute_climatology: need " + std::to_string(window_years) +
                                " reference years, have " + std::to_string(years.size()));
  }
  const std::size_t K = years.front().traj->K;
  Climatology clim;
  clim.K = K;
  clim.years = window_years;
  clim.lead = spec;
  clim.deterministic.assign(kDaysPerYear * K, 0.0);
  clim.probabilistic.assign(kDaysPerYear * window_years * K, 0.0);
  for (int d = 0; d < kDaysPerYear; ++d) {
    for (std::size_t y = 0; y < window_years; ++y) {
      const auto& ref = years[y];
      if (ref.traj->K != K) throw std::invalid_argument("compute_climatology: mixed K");
      const auto target = build_target(*ref.traj, frame_index(*ref.traj, ref.year, d), spec, save_window);
      double* member = clim.probabilistic.data() + (static_cast<std::size_t>(d) * window_years + y) * K;
      for (std::size_t k = 0; k < K; ++k) member[k] = target[k];
    }
    double* mean = clim.deterministic.data() + static_cast<std::size_t>(d) * K;
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t y = 0; y < window_years; ++y) s += clim.member(d, y)[k];
      mean[k] = s / static_cast<double>(window_years);
    }
  }
  return clim;
}

DailyClimatology daily_climatology(std::span<const Trajectory> trajs) {
  if (trajs.empty()) throw std::invalid_argument("daily_climatology: no trajectories");
  const std::size_t K = trajs.front().K;
  DailyClimatology clim{K, std::vector<double>(kDaysPerYear * K, 0.0)};
  std::vector<double> counts(kDaysPerYear, 0.0);
  for (const auto& t : trajs) {
    if (t.K != K) throw std::invalid_argument("daily_climatology: mixed K");
    for (std::size_t f = 0; f < t.stable_up_to; ++f) {
      const int d = t.day_of_year(f);
      const auto frame = t.frame(f);
      for (std::size_t k = 0; k < K; ++k) clim.mean[d * K + k] += frame[k];
      counts[d] += 1.0;
    }
  }
  for (int d = 0; d < kDaysPerYear; ++d) {
    if (counts[d] == 0.0) throw std::invalid_argument("daily_climatology: day-of-year without data");
    for (std::size_t k = 0; k < K; ++k) clim.mean[d * K + k] /= counts[d];
  }
  return clim;
}

namespace {

void check_support(const DailyClimatology& a, const DailyClimatology& b, std::size_t K) {
  if (a.K != K || b.K != K || a.mean.size() != b.mean.size() || a.mean.size() != kDaysPerYear * K) {
    throw std::invalid_argument("climatological_shift: climatologies differ in day-of-year support");
  }
}

}  // namespace

Trajectory climatological_shift(const Trajectory& traj, const DailyClimatology& source,
                                const DailyClimatology& target) {
  check_support(source, target, traj.K);
  Trajectory out = traj;
  for (std::size_t f = 0; f < out.num_frames(); ++f) {
    const int d = out.day_of_year(f);
    const auto s = source.at(d);
    const auto t = target.at(d);
    auto frame = out.frame(f);
    for (std::size_t k = 0; k < out.K; ++k) {
      frame[k] = static_cast<float>(static_cast<double>(frame[k]) - (t[k] - s[k]));
    }
  }
  return out;
}

TrainingSample climatological_shift(const TrainingSample& sample, const LeadSpec& spec, int save_window,
                                    const DailyClimatology& source, const DailyClimatology& target) {
  const std::size_t K = sample.target.size();
  check_support(source, target, K);
  auto doy = [](int d) { return ((d % kDaysPerYear) + kDaysPerYear) % kDaysPerYear; };
  TrainingSample out = sample;
  const int d0 = sample.conditioning.day_of_year;
  for (int h = 0; h < kHistoryFrames; ++h) {
    const int d = doy(d0 - h);
    for (std::size_t k = 0; k < K; ++k) {
      out.conditioning.frames[h * K + k] -= target.at(d)[k] - source.at(d)[k];
    }
  }
  const auto [first, last] = spec.frame_offsets(save_window);
  const double n = static_cast<double>(last - first + 1);
  for (std::size_t k = 0; k < K; ++k) {
    double shift = 0.0;
    for (int off = first; off <= last; ++off) {
      const int d = doy(d0 + off);
      shift += target.at(d)[k] - source.at(d)[k];
    }
    out.target[k] -= shift / n;
  }
  return out;
}

std::vector<std::size_t> valid_init_frames(const Trajectory& traj, const LeadSpec& spec, int save_window,
                                           std::size_t stride) {
  const auto last = static_cast<std::size_t>(spec.horizon_frames(save_window));
  std::vector<std::size_t> out;
  for (std::size_t n0 = kHistoryFrames - 1; n0 + last < traj.stable_up_to; n0 += stride) out.push_back(n0);
  return out;
}

}  // namespace lrd::targets
