#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lrd/targets.hpp"
#include "lrd/verify.hpp"

using namespace lrd;
using datagen::Trajectory;
using targets::LeadSpec;

namespace {

// frame value f(day, k)
template <class F>
Trajectory make_traj(std::size_t frames, std::size_t K, F f, std::int64_t first_day = 0) {
  Trajectory t;
  t.K = K;
  t.first_day = first_day;
  t.frames.resize(frames * K);
  for (std::size_t d = 0; d < frames; ++d)
    for (std::size_t k = 0; k < K; ++k) t.frames[d * K + k] = static_cast<float>(f(d, k));
  t.stable_up_to = frames;
  return t;
}

targets::DailyClimatology daily(std::size_t K, double (*f)(int, std::size_t)) {
  targets::DailyClimatology c{K, std::vector<double>(360 * K)};
  for (int d = 0; d < 360; ++d)
    for (std::size_t k = 0; k < K; ++k) c.mean[d * K + k] = f(d, k);
  return c;
}

}  // namespace

TEST(Targets, LeadFrameOffsets) {
  EXPECT_EQ(LeadSpec::medium().frame_offsets(4), std::make_pair(7, 7));
  EXPECT_EQ(LeadSpec::s2s().frame_offsets(4), std::make_pair(25, 31));
  EXPECT_EQ(LeadSpec::seasonal().frame_offsets(4), std::make_pair(70, 97));
  EXPECT_THROW((LeadSpec{28, 6, targets::LeadLabel::kMedium}.validate(4)), std::invalid_argument);
  EXPECT_THROW((LeadSpec{2, 4, targets::LeadLabel::kMedium}.validate(4)), std::invalid_argument);
}

TEST(Targets, LeadLabelsRoundTrip) {
  for (auto l : {targets::LeadLabel::kMedium, targets::LeadLabel::kS2S, targets::LeadLabel::kSeasonal})
    EXPECT_EQ(targets::parse_lead_label(targets::to_string(l)), l);
  EXPECT_THROW(targets::parse_lead_label("weekly"), std::invalid_argument);
}

TEST(Targets, SingleFrameWindow) {
  const auto t = make_traj(20, 3, [](std::size_t d, std::size_t k) { return d * 10.0 + k; });
  const auto y = targets::build_target(t, 4, LeadSpec::medium(), 4);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(y[k], t.frame(11)[k]);
}

TEST(Targets, ConstantTrajectory) {
  const auto t = make_traj(60, 4, [](std::size_t, std::size_t) { return 2.5; });
  for (double v : targets::build_target(t, 3, LeadSpec::s2s(), 4)) EXPECT_EQ(v, 2.5);
}

TEST(Targets, RampAveragesDaysTwentyFiveToThirtyOne) {
  // teacher step s has value s; day d averages steps 4d..4d+3
  const auto t = make_traj(40, 2, [](std::size_t d, std::size_t) { return 4.0 * d + 1.5; });
  double sum = 0.0;
  for (int d = 25; d <= 31; ++d) sum += 4.0 * d + 1.5;
  const auto y = targets::build_target(t, 0, LeadSpec::s2s(), 4);
  EXPECT_DOUBLE_EQ(y[0], sum / 7.0);
  EXPECT_THROW(targets::build_target(t, 9, LeadSpec::s2s(), 4), std::out_of_range);
}

TEST(Targets, TargetIsLinear) {
  const auto a = make_traj(40, 5, [](std::size_t d, std::size_t k) { return std::sin(0.3 * d + k); });
  const auto b = make_traj(40, 5, [](std::size_t d, std::size_t k) { return std::cos(0.7 * d * k); });
  const auto c = make_traj(40, 5, [&](std::size_t d, std::size_t k) {
    return 2.0 * a.frame(d)[k] - 0.5 * b.frame(d)[k];
  });
  const auto ya = targets::build_target(a, 3, LeadSpec::s2s(), 4);
  const auto yb = targets::build_target(b, 3, LeadSpec::s2s(), 4);
  const auto yc = targets::build_target(c, 3, LeadSpec::s2s(), 4);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(yc[k], 2.0 * ya[k] - 0.5 * yb[k], 1e-6);
}

TEST(Targets, ConditioningHistory) {
  const auto t = make_traj(10, 2, [](std::size_t d, std::size_t k) { return d + 0.1 * k; }, 87);
  const auto c = targets::build_conditioning(t, 3);
  for (int h = 0; h < 4; ++h)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(c.frames[h * 2 + k], t.frame(3 - h)[k]);
  EXPECT_EQ(c.day_of_year, 90);
  EXPECT_NEAR(c.phase[0], 1.0, 1e-15);
  EXPECT_NEAR(c.phase[1], 0.0, 1e-15);
  EXPECT_THROW(targets::build_conditioning(t, 2), std::out_of_range);
}

TEST(Targets, SampleConditioningPrecedesTarget) {
  const auto t = make_traj(60, 2, [](std::size_t d, std::size_t) { return double(d); });
  const auto s = targets::build_sample(t, 5, LeadSpec::s2s(), 4);
  EXPECT_EQ(s.init_frame, 5u);
  EXPECT_LT(s.conditioning.frames[0], s.target[0]);
  EXPECT_EQ(targets::valid_init_frames(t, LeadSpec::s2s(), 4).front(), 3u);
  EXPECT_EQ(targets::valid_init_frames(t, LeadSpec::s2s(), 4).back(), 60u - 32u);
}

TEST(Targets, NormalizerFit) {
  const auto t = make_traj(4, 1, [](std::size_t d, std::size_t) { return double(d); });
  const auto n = targets::Normalizer::fit(std::span(&t, 1));
  EXPECT_DOUBLE_EQ(n.mean, 1.5);
  EXPECT_DOUBLE_EQ(n.std, std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(n.invert(n.apply(7.25)), 7.25);
}

TEST(Targets, ClimatologyOfIdenticalYears) {
  std::vector<Trajectory> trajs;
  for (int y = 0; y < 20; ++y)
    trajs.push_back(make_traj(400, 2, [](std::size_t d, std::size_t k) { return std::sin(0.01 * d) + k; }));
  const auto years = targets::available_years(trajs, LeadSpec::s2s(), 4);
  ASSERT_EQ(years.size(), 20u);
  const auto c = targets::compute_climatology(years, LeadSpec::s2s(), 4, 20);
  EXPECT_EQ(c.years, 20u);
  for (int d : {0, 100, 359})
    for (std::size_t y = 0; y < 20; ++y)
      for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(c.member(d, y)[k], c.mean(d)[k], 1e-12);
}

TEST(Targets, ClimatologyMeanOfOneToTwenty) {
  std::vector<Trajectory> trajs;
  for (int v = 1; v <= 20; ++v)
    trajs.push_back(make_traj(400, 1, [v](std::size_t, std::size_t) { return double(v); }));
  const auto years = targets::available_years(trajs, LeadSpec::s2s(), 4);
  const auto c = targets::compute_climatology(years, LeadSpec::s2s(), 4, 20);
  EXPECT_DOUBLE_EQ(c.mean(42)[0], 10.5);
  EXPECT_THROW(targets::compute_climatology(std::span(years).first(19), LeadSpec::s2s(), 4, 20),
               std::invalid_argument);

  // probabilistic climatology scored against one of its own members
  std::vector<double> ens;
  for (std::size_t y = 0; y < 20; ++y) ens.push_back(c.member(42, y)[0]);
  double abs_sum = 0.0, pair_sum = 0.0;
  for (int i = 1; i <= 20; ++i) {
    abs_sum += std::abs(i - 7.0);
    for (int j = 1; j <= 20; ++j) pair_sum += std::abs(i - j);
  }
  const double hand = abs_sum / 20.0 - pair_sum / (2.0 * 400.0);
  EXPECT_NEAR(verify::crps_ensemble(ens, 7.0), hand, 1e-12);
}

TEST(Targets, ShiftIdentityAndConstant) {
  const auto t = make_traj(30, 3, [](std::size_t d, std::size_t k) { return d * 0.1 + k; }, 350);
  const auto base = daily(3, [](int d, std::size_t k) { return 0.01 * d + k; });
  const auto same = targets::climatological_shift(t, base, base);
  EXPECT_EQ(same.frames, t.frames);

  const auto plus = daily(3, [](int d, std::size_t k) { return 0.01 * d + k + 0.75; });
  const auto shifted = targets::climatological_shift(t, base, plus);
  for (std::size_t i = 0; i < t.frames.size(); ++i) EXPECT_NEAR(shifted.frames[i], t.frames[i] - 0.75, 1e-6);
}

TEST(Targets, SinusoidalShiftLooksUpEachDay) {
  const auto t = make_traj(400, 2, [](std::size_t, std::size_t) { return 0.0; }, 100);
  const auto zero = daily(2, [](int, std::size_t) { return 0.0; });
  const auto sine = daily(2, [](int d, std::size_t) { return std::sin(2 * std::numbers::pi * d / 360.0); });
  const auto s = targets::climatological_shift(t, zero, sine);
  for (std::size_t f = 0; f < 400; ++f) {
    const double expect = -std::sin(2 * std::numbers::pi * ((100 + f) % 360) / 360.0);
    EXPECT_NEAR(s.frame(f)[1], expect, 1e-6);
  }

  // the sample form equals building the sample from the shifted trajectory
  const auto sample = targets::build_sample(t, 300, LeadSpec::s2s(), 4);
  const auto shifted = targets::climatological_shift(sample, LeadSpec::s2s(), 4, zero, sine);
  const auto from_traj = targets::build_sample(s, 300, LeadSpec::s2s(), 4);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(shifted.conditioning.frames[i], from_traj.conditioning.frames[i], 1e-6);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(shifted.target[k], from_traj.target[k], 1e-6);
}

TEST(Targets, ShiftRejectsMismatchedSupport) {
  const auto t = make_traj(10, 3, [](std::size_t, std::size_t) { return 0.0; });
  const auto a = daily(3, [](int, std::size_t) { return 0.0; });
  targets::DailyClimatology b{3, std::vector<double>(100 * 3)};
  EXPECT_THROW(targets::climatological_shift(t, a, b), std::invalid_argument);
}
