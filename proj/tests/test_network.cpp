#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "lrd/network.hpp"

using namespace lrd;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Network, ArrayNamesAndGroups) {
  const auto p = net::init_params({8, 2, 5, 5, 1, 5}, 1);
  EXPECT_EQ(p.at("in.weight").group, net::ParamGroup::kInput);
  EXPECT_EQ(p.at("block1.norm2.scale").group, net::ParamGroup::kNorm);
  EXPECT_EQ(p.at("block0.conv1.weight").group, net::ParamGroup::kBlockConv);
  EXPECT_EQ(p.at("out.weight").group, net::ParamGroup::kOutput);
  EXPECT_EQ(p.at("emb.weight").group, net::ParamGroup::kEmbedding);
  EXPECT_THROW(p.at("nope"), std::out_of_range);
}

TEST(Network, InitIsSeedDeterministic) {
  const net::ArchSpec a{8, 2, 5, 5, 1, 5};
  EXPECT_EQ(net::init_params(a, 3), net::init_params(a, 3));
  EXPECT_FALSE(net::init_params(a, 3) == net::init_params(a, 4));
}

TEST(Network, ShiftEquivariance) {
  const net::ArchSpec a{6, 2, 3, 2, 1, 3};
  auto p = net::init_params(a, 5);
  check::jitter_params(p, 6);
  const std::size_t K = 12;
  const auto x = random_vec(2 * K, 7);
  const auto f = random_vec(3, 8);
  const net::Backbone bb(a);
  const auto y = bb.forward(p, x, f, 1, K, nullptr);
  std::vector<double> xs(2 * K);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < K; ++k) xs[c * K + (k + 3) % K] = x[c * K + k];
  const auto ys = bb.forward(p, xs, f, 1, K, nullptr);
  for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(ys[(k + 3) % K], y[k], 1e-12);
}

TEST(Network, BatchRowsAreIndependent) {
  const net::ArchSpec a{6, 2, 3, 2, 1, 3};
  auto p = net::init_params(a, 9);
  check::jitter_params(p, 10);
  const std::size_t K = 10;
  const auto x = random_vec(3 * 2 * K, 11);
  const auto f = random_vec(3 * 3, 12);
  const net::Backbone bb(a);
  const auto all = bb.forward(p, x, f, 3, K, nullptr);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto one = bb.forward(p, std::span(x).subspan(b * 2 * K, 2 * K), std::span(f).subspan(b * 3, 3), 1, K,
                                nullptr);
    for (std::size_t k = 0; k < K; ++k) EXPECT_EQ(one[k], all[b * K + k]);
  }
}

TEST(Network, BackwardMatchesFiniteDifferences) {
  const net::ArchSpec a{6, 2, 3, 3, 2, 4};
  auto p = net::init_params(a, 13);
  check::jitter_params(p, 14);
  const std::size_t K = 9, B = 2;
  const auto x = random_vec(B * 3 * K, 15);
  const auto f = random_vec(B * 4, 16);
  const auto g = random_vec(B * 2 * K, 17);  // loss = <g, out>
  const net::Backbone bb(a);
  net::ForwardCache cache;
  bb.forward(p, x, f, B, K, &cache);
  auto grads = net::Gradients::zeros_like(p);
  bb.backward(p, cache, g, grads);
  auto loss = [&](const net::NetParams& q) {
    const auto y = bb.forward(q, x, f, B, K, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
    return s;
  };
  const auto rep = check::gradcheck(p, grads.arrays, loss, 1000, 18);
  EXPECT_LT(rep.worst, 1e-6);
}

TEST(Network, InputGradientMatchesFiniteDifferences) {
  const net::ArchSpec a{5, 1, 3, 2, 1, 2};
  auto p = net::init_params(a, 19);
  check::jitter_params(p, 20);
  const std::size_t K = 7;
  auto x = random_vec(2 * K, 21);
  const auto f = random_vec(2, 22);
  const auto g = random_vec(K, 23);
  const net::Backbone bb(a);
  net::ForwardCache cache;
  bb.forward(p, x, f, 1, K, &cache);
  auto grads = net::Gradients::zeros_like(p);
  const auto dx = bb.backward(p, cache, g, grads);
  auto loss = [&](const std::vector<double>& xi) {
    const auto y = bb.forward(p, xi, f, 1, K, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + 1e-5;
    const double lp = loss(x);
    x[i] = x0 - 1e-5;
    const double lm = loss(x);
    x[i] = x0;
    EXPECT_NEAR(dx[i], (lp - lm) / 2e-5, 1e-7 * std::max(1.0, std::abs(dx[i])));
  }
}
