#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "lrd/kernels.hpp"
#include "lrd/rng.hpp"

using namespace lrd;
using kernels::ConvShape;

namespace {

std::vector<double> rnd(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Direct circular convolution with modular indexing.
double direct(const ConvShape& s, const std::vector<double>& in, const std::vector<double>& w,
              const std::vector<double>& bias, std::size_t b, std::size_t o, std::size_t k) {
  const auto K = static_cast<long>(s.width);
  const auto r = static_cast<long>(s.radius());
  double acc = bias[o];
  for (std::size_t i = 0; i < s.in_channels; ++i)
    for (std::size_t t = 0; t < s.taps; ++t) {
      const long src = ((static_cast<long>(k) + static_cast<long>(t) - r) % K + K) % K;
      acc += w[(o * s.in_channels + i) * s.taps + t] * in[(b * s.in_channels + i) * s.width + src];
    }
  return acc;
}

class ConvShapes : public ::testing::TestWithParam<ConvShape> {};

}  // namespace

TEST_P(ConvShapes, SerialMatchesDirectFormula) {
  const ConvShape s = GetParam();
  const auto in = rnd(s.in_size(), 1), w = rnd(s.weight_size(), 2), b = rnd(s.out_channels, 3);
  std::vector<double> out(s.out_size());
  kernels::serial::conv1d_forward(s, in, w, b, out);
  for (std::size_t bb = 0; bb < s.batch; ++bb)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t k = 0; k < s.width; ++k)
        EXPECT_NEAR(out[(bb * s.out_channels + o) * s.width + k], direct(s, in, w, b, bb, o, k), 1e-12);
}

TEST_P(ConvShapes, ParallelIsBitwiseSerial) {
  const ConvShape s = GetParam();
  const auto in = rnd(s.in_size(), 4), w = rnd(s.weight_size(), 5), b = rnd(s.out_channels, 6);
  const auto dout = rnd(s.out_size(), 7);
  std::vector<double> o1(s.out_size()), o2(s.out_size());
  kernels::serial::conv1d_forward(s, in, w, b, o1);
  kernels::parallel::conv1d_forward(s, in, w, b, o2);
  EXPECT_EQ(o1, o2);
  std::vector<double> d1(s.in_size(), 9.0), d2(s.in_size(), -9.0);
  kernels::serial::conv1d_backward_input(s, dout, w, d1);
  kernels::parallel::conv1d_backward_input(s, dout, w, d2);
  EXPECT_EQ(d1, d2);
  auto gw1 = rnd(s.weight_size(), 8), gb1 = rnd(s.out_channels, 9);
  auto gw2 = gw1, gb2 = gb1;
  kernels::serial::conv1d_backward_params(s, in, dout, gw1, gb1);
  kernels::parallel::conv1d_backward_params(s, in, dout, gw2, gb2);
  EXPECT_EQ(gw1, gw2);
  EXPECT_EQ(gb1, gb2);
}

TEST_P(ConvShapes, BackwardInputIsAdjointOfForward) {
  const ConvShape s = GetParam();
  const auto x = rnd(s.in_size(), 10), w = rnd(s.weight_size(), 11), y = rnd(s.out_size(), 12);
  const std::vector<double> zero(s.out_channels, 0.0);
  std::vector<double> Ax(s.out_size()), Aty(s.in_size());
  kernels::parallel::conv1d_forward(s, x, w, zero, Ax);
  kernels::parallel::conv1d_backward_input(s, y, w, Aty);
  double l = 0.0, r = 0.0;
  for (std::size_t i = 0; i < Ax.size(); ++i) l += Ax[i] * y[i];
  for (std::size_t i = 0; i < Aty.size(); ++i) r += x[i] * Aty[i];
  EXPECT_NEAR(l, r, 1e-10 * std::max(1.0, std::abs(l)));
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvShapes,
                         ::testing::Values(ConvShape{1, 1, 1, 5, 1}, ConvShape{2, 3, 5, 9, 3},
                                           ConvShape{3, 5, 32, 40, 5}, ConvShape{2, 32, 1, 40, 5},
                                           ConvShape{4, 7, 6, 17, 7}, ConvShape{1, 4, 4, 9, 9},
                                           ConvShape{2, 2, 3, 11, 11}));

TEST(Conv, RejectsBadShapes) {
  std::vector<double> v(100);
  EXPECT_THROW(kernels::serial::conv1d_forward({1, 1, 1, 8, 4}, std::span(v).first(8), std::span(v).first(4),
                                               std::span(v).first(1), std::span(v).first(8)),
               std::invalid_argument);
  EXPECT_THROW(kernels::parallel::conv1d_forward({1, 1, 1, 8, 3}, std::span(v).first(7), std::span(v).first(3),
                                                 std::span(v).first(1), std::span(v).first(8)),
               std::invalid_argument);
}

TEST(GroupNorm, NormalizesEachSample) {
  kernels::NormShape s{2, 3, 8};
  const auto x = rnd(48, 13);
  std::vector<double> g(3, 1.0), b(3, 0.0), y(48), hat(48), inv(2);
  kernels::group_norm_forward(s, x, g, b, y, hat, inv);
  for (int sample = 0; sample < 2; ++sample) {
    double m = 0.0, v = 0.0;
    for (int j = 0; j < 24; ++j) m += y[sample * 24 + j];
    m /= 24;
    for (int j = 0; j < 24; ++j) v += (y[sample * 24 + j] - m) * (y[sample * 24 + j] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 24, 1.0, 1e-4);
  }
}

TEST(Silu, ValuesAndDerivative) {
  const std::vector<double> x{-2.0, 0.0, 1.5};
  std::vector<double> y(3), dx(3);
  kernels::silu_forward(x, y);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  EXPECT_NEAR(y[2], 1.5 / (1.0 + std::exp(-1.5)), 1e-15);
  kernels::silu_backward(x, std::vector<double>(3, 1.0), dx);
  for (int i = 0; i < 3; ++i) {
    const double h = 1e-6;
    const double num = ((x[i] + h) / (1 + std::exp(-(x[i] + h))) - (x[i] - h) / (1 + std::exp(-(x[i] - h)))) / (2 * h);
    EXPECT_NEAR(dx[i], num, 1e-8);
  }
}
