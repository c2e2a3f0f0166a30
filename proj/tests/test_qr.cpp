#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "loop_oracle.hpp"
#include "lrd/qrbaseline.hpp"

using namespace lrd;

namespace {

constexpr std::size_t kK = 10;

student::Batch random_batch(std::size_t B, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  student::Batch b;
  b.size = B;
  b.K = kK;
  b.conditioning.resize(B * 4 * kK);
  for (double& x : b.conditioning) x = n(g);
  b.target.resize(B * kK);
  for (double& x : b.target) x = n(g);
  for (std::size_t i = 0; i < B; ++i) {
    b.day_of_year.push_back(static_cast<int>(53 * i % 360));
    const auto ph = targets::seasonal_phase(b.day_of_year.back());
    b.phase.push_back(ph[0]);
    b.phase.push_back(ph[1]);
  }
  return b;
}

std::vector<std::uint8_t> random_labels(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(g() % qr::kBins);
  return y;
}

}  // namespace

TEST(Quintiles, EdgesOfOneToTwenty) {
  std::vector<double> v(20);
  std::iota(v.begin(), v.end(), 1.0);
  const auto e = qr::quintile_edges(v);
  const std::array<double, 4> want{4.8, 8.6, 12.4, 16.2};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(e[i], want[i], 1e-12);
  EXPECT_EQ(qr::quintile_bin(e, 4.8), 0);
  EXPECT_EQ(qr::quintile_bin(e, 4.81), 1);
  EXPECT_EQ(qr::quintile_bin(e, 100.0), 4);
}

TEST(Quintiles, DegenerateInputsThrow) {
  EXPECT_THROW(qr::quintile_edges(std::vector<double>(20, 3.0)), std::invalid_argument);
  EXPECT_THROW(qr::quintile_edges(std::vector<double>(19, 1.0)), std::invalid_argument);
}

TEST(Quintiles, FreshDrawsFillBinsEvenly) {
  std::mt19937_64 g(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> fit(10000);
  for (double& x : fit) x = n(g);
  const auto e = qr::quintile_edges(fit);
  std::array<int, 5> count{};
  for (int i = 0; i < 10000; ++i) ++count[qr::quintile_bin(e, n(g))];
  for (int c : count) EXPECT_NEAR(c / 10000.0, 0.2, 0.02);
}

TEST(Quintiles, EdgesFileRoundTrip) {
  qr::QuintileEdges q;
  q.K = 3;
  for (int i = 0; i < 360 * 3; ++i) q.edges.push_back({i * 1.0, i + 0.25, i + 0.5, i + 0.75});
  const auto path = std::filesystem::temp_directory_path() / "lrd_test_edges.bin";
  qr::write_edges(path, q);
  const auto r = qr::read_edges(path);
  EXPECT_EQ(r.K, 3u);
  EXPECT_EQ(r.edges, q.edges);
  std::filesystem::remove(path);
}

TEST(QrForward, ZeroHeadIsUniform) {
  auto p = net::init_params(qr::qr_arch(8, 1, 3), 2);
  for (double& w : p.at("out.weight").value) w = 0.0;
  for (double& w : p.at("out.bias").value) w = 0.0;
  const auto b = random_batch(3, 3);
  for (double v : qr::qr_forward(p, b.conditioning, b.phase, 3, kK)) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(QrForward, MatchesLoopOracle) {
  auto p = net::init_params(qr::qr_arch(8, 2, 3), 4);
  check::jitter_params(p, 5);
  const auto b = random_batch(2, 6);
  const auto probs = qr::qr_forward(p, b.conditioning, b.phase, 2, kK);
  for (std::size_t s = 0; s < 2; ++s) {
    std::vector<std::vector<double>> in(4, std::vector<double>(kK));
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < kK; ++k) in[c][k] = b.conditioning[(s * 4 + c) * kK + k];
    const auto logits = check::loop_backbone(p, in, {b.phase[2 * s], b.phase[2 * s + 1]});
    for (std::size_t k = 0; k < kK; ++k) {
      double z = 0.0;
      for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits[c][k]);
      double sum = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        const double got = probs[(s * 5 + c) * kK + k];
        EXPECT_NEAR(got, std::exp(logits[c][k]) / z, 1e-12);
        sum += got;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(QrLoss, UniformPredictionCostsLogFive) {
  auto p = net::init_params(qr::qr_arch(8, 1, 3), 7);
  for (double& w : p.at("out.weight").value) w = 0.0;
  for (double& w : p.at("out.bias").value) w = 0.0;
  const auto b = random_batch(4, 8);
  EXPECT_NEAR(qr::qr_loss(p, b, random_labels(4 * kK, 9), false).loss, std::log(5.0), 1e-12);
}

TEST(QrLoss, FreshInitNearLogFive) {
  const auto p = net::init_params(qr::qr_arch(), 10);
  const auto b = random_batch(16, 11);
  EXPECT_NEAR(qr::qr_loss(p, b, random_labels(16 * kK, 12), false).loss, std::log(5.0), 0.02 * std::log(5.0));
}

TEST(QrLoss, GradientMatchesFiniteDifferences) {
  auto p = net::init_params(qr::qr_arch(12, 2, 3), 13);
  check::jitter_params(p, 14);
  const auto b = random_batch(3, 15);
  const auto y = random_labels(3 * kK, 16);
  const auto res = qr::qr_loss(p, b, y);
  const auto rep = check::gradcheck(
      p, res.grads.arrays, [&](const net::NetParams& q) { return qr::qr_loss(q, b, y, false).loss; }, 64, 17);
  for (const auto& [group, n] : rep.probes) EXPECT_GE(n, 64) << static_cast<int>(group);
  EXPECT_LT(rep.worst, 1e-4);
}

TEST(QrLoss, RejectsBadLabels) {
  const auto p = net::init_params(qr::qr_arch(8, 1, 3), 18);
  const auto b = random_batch(2, 19);
  auto y = random_labels(2 * kK, 20);
  y[3] = 5;
  EXPECT_THROW(qr::qr_loss(p, b, y), std::invalid_argument);
  y.pop_back();
  EXPECT_THROW(qr::qr_loss(p, b, y), std::invalid_argument);
}

TEST(Rps, UniformAndPerfect) {
  const std::vector<double> u(5, 0.2);
  double mean = 0.0;
  for (int y = 0; y < 5; ++y) mean += qr::rps(u, y) / 5.0;
  // sum over thresholds of p(1 - p) for p = 0.2, 0.4, 0.6, 0.8
  EXPECT_NEAR(mean, 0.8, 1e-12);
  for (int y = 0; y < 5; ++y) {
    std::vector<double> perfect(5, 0.0);
    perfect[y] = 1.0;
    EXPECT_EQ(qr::rps(perfect, y), 0.0);
  }
  std::vector<double> worst{1.0, 0.0, 0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(qr::rps(worst, 4), 4.0);
  EXPECT_THROW(qr::rps(u, 5), std::invalid_argument);
}

TEST(Rps, EvaluateAgainstUniform) {
  auto p = net::init_params(qr::qr_arch(8, 1, 3), 21);
  for (double& w : p.at("out.weight").value) w = 0.0;
  for (double& w : p.at("out.bias").value) w = 0.0;
  const auto b = random_batch(300, 22);
  const auto sc = qr::qr_evaluate(p, b, random_labels(300 * kK, 23));
  EXPECT_NEAR(sc.rps_model, sc.rps_climatology, 1e-12);
  EXPECT_NEAR(sc.skill, 0.0, 1e-12);
  EXPECT_NEAR(sc.rps_climatology, 0.8, 0.05);
  EXPECT_NEAR(sc.cross_entropy, std::log(5.0), 1e-12);
}
