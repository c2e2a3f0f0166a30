#pragma once

// Data-parallel inner kernels.
//
// Every kernel exists twice: `serial` is the plain reference loop nest kept
// for testing, `parallel` is the OpenMP version used by the library. Both
// accumulate every output element in the same order, so their results are
// bitwise identical and independent of the thread count.
//
// Layouts: activations [batch][channel][K] on a periodic ring of K points,
// convolution weights [out][in][taps] with an odd tap count centered on the
// output point.

#include <cstddef>
#include <span>

namespace lrd::kernels {

struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t width = 1;  // ring size K
  std::size_t taps = 1;

  std::size_t radius() const noexcept { return taps / 2; }
  std::size_t in_size() const noexcept { return batch * in_channels * width; }
  std::size_t out_size() const noexcept { return batch * out_channels * width; }
  std::size_t weight_size() const noexcept { return out_channels * in_channels * taps; }
  /// Throws std::invalid_argument on an even tap count or taps > width.
  void validate() const;
};

namespace serial {

/// out[b,o,k] = bias[o] + sum_i sum_t w[o,i,t] * in[b,i,(k+t-r) mod K]
void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
/// din = transpose-convolution of dout (overwrites din).
void conv1d_backward_input(const ConvShape& s, std::span<const double> dout, std::span<const double> weight,
                           std::span<double> din);
/// Accumulates weight and bias gradients into dweight/dbias.
void conv1d_backward_params(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dweight, std::span<double> dbias);

}  // namespace serial

namespace parallel {

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward_input(const ConvShape& s, std::span<const double> dout, std::span<const double> weight,
                           std::span<double> din);
void conv1d_backward_params(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dweight, std::span<double> dbias);

}  // namespace parallel

/// Single-group normalization over (channels x K) of each sample with a
/// per-channel scale and offset.
struct NormShape {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t width = 1;
  double eps = 1e-5;
};

/// Writes y and caches xhat [B*C*K] and inv_std [B].
void group_norm_forward(const NormShape& s, std::span<const double> x, std::span<const double> gamma,
                        std::span<const double> beta, std::span<double> y, std::span<double> xhat,
                        std::span<double> inv_std);
/// Overwrites dx; accumulates dgamma/dbeta.
void group_norm_backward(const NormShape& s, std::span<const double> dy, std::span<const double> xhat,
                         std::span<const double> inv_std, std::span<const double> gamma, std::span<double> dx,
                         std::span<double> dgamma, std::span<double> dbeta);

void silu_forward(std::span<const double> x, std::span<double> y);
/// dx = dy * silu'(x) (overwrites dx).
void silu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

}  // namespace lrd::kernels
