#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lrd/perturb.hpp"
#include "lrd/targets.hpp"

using namespace lrd;
using perturb::PerturbationSpec;

namespace {

constexpr std::size_t kK = 40;

// empirical lag correlation and per-point std over n single-frame draws
struct FieldStats {
  std::vector<double> corr;  // by lag
  double std = 0.0;
  double mean = 0.0;
};

FieldStats field_stats(const PerturbationSpec& spec, std::size_t n, std::uint64_t seed) {
  const perturb::NoiseGenerator gen(spec, kK);
  Rng rng(seed);
  std::vector<double> cov(kK / 2 + 1, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = gen.sample(rng, 1);
    for (std::size_t k = 0; k < kK; ++k) {
      sum += x[k];
      for (std::size_t l = 0; l < cov.size(); ++l) cov[l] += x[k] * x[(k + l) % kK];
    }
  }
  FieldStats s;
  const double m = static_cast<double>(n * kK);
  s.mean = sum / m;
  for (double c : cov) s.corr.push_back(c / cov[0]);
  s.std = std::sqrt(cov[0] / m);
  return s;
}

datagen::NatureRun small_nature() {
  datagen::GenerationConfig g;
  g.duration_years = 1.0;
  g.spinup_years = 0.3;
  return datagen::run_nature(12345, g, {});
}

}  // namespace

TEST(Matern, KernelValues) {
  EXPECT_DOUBLE_EQ(perturb::matern32(0.0, 4.0), 1.0);
  const double r = std::sqrt(3.0) * 2.0 / 4.0;
  EXPECT_NEAR(perturb::matern32(2.0, 4.0, 0.5), 0.25 * (1 + r) * std::exp(-r), 1e-15);
}

TEST(Matern, EmpiricalAutocorrelationMatchesKernel) {
  PerturbationSpec spec;
  spec.amplitude = 0.3;
  const auto s = field_stats(spec, 10000, 1);
  for (std::size_t lag : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
    const double k = perturb::matern32(static_cast<double>(lag), spec.length_scale);
    EXPECT_NEAR(s.corr[lag], k, 0.2 * k) << "lag " << lag;
  }
  EXPECT_NEAR(s.std, 0.3, 0.03 * 0.3);
  EXPECT_LT(std::abs(s.mean), 3.0 * 0.3 / std::sqrt(10000.0));
}

TEST(Matern, ShortLengthScaleDecorrelates) {
  PerturbationSpec spec;
  spec.length_scale = 0.1;
  const auto s = field_stats(spec, 10000, 2);
  EXPECT_LT(std::abs(s.corr[1]), 0.1);
}

TEST(Matern, InfiniteTimeScaleRepeatsFrames) {
  PerturbationSpec spec;
  spec.time_scale = std::numeric_limits<double>::infinity();
  Rng rng(3);
  const auto x = perturb::correlated_noise(rng, spec, 4, kK);
  for (std::size_t f = 1; f < 4; ++f)
    for (std::size_t k = 0; k < kK; ++k) EXPECT_EQ(x[f * kK + k], x[k]);
}

TEST(Matern, TemporalLagOneCorrelation) {
  PerturbationSpec spec;
  const perturb::NoiseGenerator gen(spec, kK);
  Rng rng(4);
  double c01 = 0.0, c00 = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const auto x = gen.sample(rng, 2);
    for (std::size_t k = 0; k < kK; ++k) {
      c00 += x[k] * x[k];
      c01 += x[k] * x[kK + k];
    }
  }
  EXPECT_NEAR(c01 / c00, std::exp(-1.0 / spec.time_scale), 0.02);
}

TEST(Matern, InvalidSpec) {
  PerturbationSpec spec;
  spec.amplitude = -0.1;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = {};
  spec.length_scale = -1.0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(PerturbIc, Arithmetic) {
  const std::vector<double> c{1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(perturb::perturb_ic(c, std::vector<double>(4, 0.0)), c);
  const auto one = perturb::perturb_ic(c, std::vector<double>{0.0, 0.0, 0.5, 0.0});
  EXPECT_EQ(one, (std::vector<double>{1.0, 2.0, 3.5, 4.0}));
  const std::vector<double> noise{0.3, -0.4, 0.1, 0.2};
  const auto p = perturb::perturb_ic(c, noise);
  double se = 0.0, ns = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    se += (p[i] - c[i]) * (p[i] - c[i]);
    ns += noise[i] * noise[i];
  }
  EXPECT_NEAR(std::sqrt(se / 4), std::sqrt(ns / 4), 1e-15);
  EXPECT_THROW(perturb::perturb_ic(c, std::vector<double>(3, 0.0)), std::invalid_argument);
}

class Tuning : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    nature_ = new datagen::NatureRun(small_nature());
    norm_ = targets::Normalizer::fit(std::span(&nature_->trajectory, 1));
  }
  static void TearDownTestSuite() { delete nature_; }

  perturb::TuningProblem problem(std::uint64_t seed) const {
    perturb::TuningProblem p;
    p.nature = nature_;
    for (std::size_t n0 = 3; p.cases.size() < 100; n0 += 2) p.cases.push_back(n0);
    p.physical_std = norm_.std;
    p.seed = seed;
    return p;
  }

  static datagen::NatureRun* nature_;
  static targets::Normalizer norm_;
};
datagen::NatureRun* Tuning::nature_ = nullptr;
targets::Normalizer Tuning::norm_;

TEST_F(Tuning, ZeroTargetGivesZeroAmplitude) {
  const auto r = perturb::tune_amplitude(problem(1), 0.0);
  EXPECT_EQ(r.amplitude, 0.0);
  EXPECT_EQ(r.achieved_rmse, 0.0);
}

TEST_F(Tuning, ConvergesAndIsSeedStable) {
  const double target = 0.7 * norm_.std;
  const auto a = perturb::tune_amplitude(problem(1), target);
  const auto b = perturb::tune_amplitude(problem(2), target);
  EXPECT_LE(std::abs(a.achieved_rmse - target), 0.02 * target);
  EXPECT_LE(std::abs(b.achieved_rmse - target), 0.02 * target);
  EXPECT_LE(std::abs(a.amplitude - b.amplitude), 0.05 * a.amplitude);
  for (std::size_t i = 1; i < a.grid_rmse.size(); ++i) EXPECT_GE(a.grid_rmse[i], 0.98 * a.grid_rmse[i - 1]);
  EXPECT_LT(a.grid_rmse[1], a.grid_rmse.back());
}

TEST_F(Tuning, RejectsTooFewCasesAndUnreachableTargets) {
  auto p = problem(1);
  p.cases.resize(99);
  EXPECT_THROW(perturb::tune_amplitude(p, 1.0), std::invalid_argument);
  EXPECT_THROW(perturb::tune_amplitude(problem(1), 100.0 * norm_.std), std::runtime_error);
}
