#include "lrd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace lrd::kernels {

void ConvShape::validate() const {
  if (taps % 2 == 0) throw std::invalid_argument("ConvShape: tap count must be odd");
  if (taps > width) throw std::invalid_argument("ConvShape: taps exceed ring width");
  if (batch == 0 || in_channels == 0 || out_channels == 0) throw std::invalid_argument("ConvShape: empty");
}

namespace {

void check(const ConvShape& s, std::size_t in, std::size_t w, std::size_t out) {
  s.validate();
  if (in != s.in_size() || w != s.weight_size() || out != s.out_size()) {
    throw std::invalid_argument("conv1d: buffer sizes do not match shape");
  }
}

inline std::size_t wrap(std::ptrdiff_t i, std::size_t K) {
  const auto k = static_cast<std::ptrdiff_t>(K);
  return static_cast<std::size_t>(((i % k) + k) % k);
}

// Copies rows of length K into rows of length K + 2r with circular halos.
void pad_rows(const double* src, std::size_t rows, std::size_t K, std::size_t r, double* dst) {
  const std::size_t P = K + 2 * r;
  for (std::size_t row = 0; row < rows; ++row) {
    const double* s = src + row * K;
    double* d = dst + row * P;
    for (std::size_t j = 0; j < P; ++j) d[j] = s[wrap(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(r), K)];
  }
}

}  // namespace

namespace serial {

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  check(s, in.size(), weight.size(), out.size());
  const std::size_t K = s.width;
  const auto r = static_cast<std::ptrdiff_t>(s.radius());
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      for (std::size_t k = 0; k < K; ++k) {
        double acc = bias[o];
        for (std::size_t i = 0; i < s.in_channels; ++i) {
          for (std::size_t t = 0; t < s.taps; ++t) {
            const std::size_t src = wrap(static_cast<std::ptrdiff_t>(k + t) - r, K);
            acc += weight[(o * s.in_channels + i) * s.taps + t] * in[(b * s.in_channels + i) * K + src];
          }
        }
        out[(b * s.out_channels + o) * K + k] = acc;
      }
    }
  }
}

void conv1d_backward_input(const ConvShape& s, std::span<const double> dout, std::span<const double> weight,
                           std::span<double> din) {
  check(s, din.size(), weight.size(), dout.size());
  const std::size_t K = s.width;
  const auto r = static_cast<std::ptrdiff_t>(s.radius());
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        double acc = 0.0;
        for (std::size_t o = 0; o < s.out_channels; ++o) {
          for (std::size_t t = 0; t < s.taps; ++t) {
            const std::size_t k = wrap(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(t) + r, K);
            acc += weight[(o * s.in_channels + i) * s.taps + t] * dout[(b * s.out_channels + o) * K + k];
          }
        }
        din[(b * s.in_channels + i) * K + j] = acc;
      }
    }
  }
}

void conv1d_backward_params(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dweight, std::span<double> dbias) {
  check(s, in.size(), dweight.size(), dout.size());
  const std::size_t K = s.width;
  const auto r = static_cast<std::ptrdiff_t>(s.radius());
  std::vector<double> partial(K);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      for (std::size_t t = 0; t < s.taps; ++t) {
        for (std::size_t k = 0; k < K; ++k) {
          double acc = 0.0;
          const std::size_t src = wrap(static_cast<std::ptrdiff_t>(k + t) - r, K);
          for (std::size_t b = 0; b < s.batch; ++b) {
            acc += dout[(b * s.out_channels + o) * K + k] * in[(b * s.in_channels + i) * K + src];
          }
          partial[k] = acc;
        }
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) total += partial[k];
        dweight[(o * s.in_channels + i) * s.taps + t] += total;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.batch; ++b) acc += dout[(b * s.out_channels + o) * K + k];
      partial[k] = acc;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += partial[k];
    dbias[o] += total;
  }
}

}  // namespace serial

namespace parallel {

namespace {

// Register tiles: KT consecutive ring points times NO output rows.
constexpr std::size_t KT = 8;
constexpr std::size_t OT = 4;

// out rows o0..o0+NO-1 of sample b; padded holds this sample's Ci rows.
template <std::size_t NO>
void conv_rows(const double* prow, const double* weight, const double* bias, std::size_t o0, std::size_t Ci,
               std::size_t T, std::size_t K, std::size_t P, double* out) {
  std::size_t k0 = 0;
  for (; k0 + KT <= K; k0 += KT) {
    double acc[NO][KT];
    for (std::size_t oo = 0; oo < NO; ++oo)
      for (std::size_t kk = 0; kk < KT; ++kk) acc[oo][kk] = bias[o0 + oo];
    for (std::size_t i = 0; i < Ci; ++i) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* src = prow + i * P + t + k0;
        for (std::size_t oo = 0; oo < NO; ++oo) {
          const double w = weight[((o0 + oo) * Ci + i) * T + t];
#pragma omp simd
          for (std::size_t kk = 0; kk < KT; ++kk) acc[oo][kk] += w * src[kk];
        }
      }
    }
    for (std::size_t oo = 0; oo < NO; ++oo)
      for (std::size_t kk = 0; kk < KT; ++kk) out[(o0 + oo) * K + k0 + kk] = acc[oo][kk];
  }
  for (std::size_t oo = 0; oo < NO; ++oo) {
    for (std::size_t k = k0; k < K; ++k) {
      double a = bias[o0 + oo];
      for (std::size_t i = 0; i < Ci; ++i)
        for (std::size_t t = 0; t < T; ++t) a += weight[((o0 + oo) * Ci + i) * T + t] * prow[i * P + t + k];
      out[(o0 + oo) * K + k] = a;
    }
  }
}

// din rows i0..i0+NI-1 of sample b; drow holds this sample's Co padded rows.
template <std::size_t NI>
void conv_t_rows(const double* drow, const double* weight, std::size_t i0, std::size_t Ci, std::size_t Co,
                 std::size_t T, std::size_t r, std::size_t K, std::size_t P, double* din) {
  std::size_t k0 = 0;
  for (; k0 + KT <= K; k0 += KT) {
    double acc[NI][KT] = {};
    for (std::size_t o = 0; o < Co; ++o) {
      for (std::size_t t = 0; t < T; ++t) {
        // dout[(j - t + r) mod K] == padded[j - t + 2r]
        const double* src = drow + o * P + 2 * r - t + k0;
        for (std::size_t ii = 0; ii < NI; ++ii) {
          const double w = weight[(o * Ci + i0 + ii) * T + t];
#pragma omp simd
          for (std::size_t kk = 0; kk < KT; ++kk) acc[ii][kk] += w * src[kk];
        }
      }
    }
    for (std::size_t ii = 0; ii < NI; ++ii)
      for (std::size_t kk = 0; kk < KT; ++kk) din[(i0 + ii) * K + k0 + kk] = acc[ii][kk];
  }
  for (std::size_t ii = 0; ii < NI; ++ii) {
    for (std::size_t j = k0; j < K; ++j) {
      double a = 0.0;
      for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t t = 0; t < T; ++t) a += weight[(o * Ci + i0 + ii) * T + t] * drow[o * P + 2 * r - t + j];
      din[(i0 + ii) * K + j] = a;
    }
  }
}

}  // namespace

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  check(s, in.size(), weight.size(), out.size());
  const std::size_t K = s.width;
  const std::size_t r = s.radius();
  const std::size_t P = K + 2 * r;
  const std::size_t Ci = s.in_channels;
  const std::size_t Co = s.out_channels;
  const std::size_t T = s.taps;
  std::vector<double> padded(s.batch * Ci * P);
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < B; ++b) pad_rows(in.data() + b * Ci * K, Ci, K, r, padded.data() + b * Ci * P);

  const std::size_t oblocks = (Co + OT - 1) / OT;
  const auto jobs = static_cast<std::ptrdiff_t>(s.batch * oblocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / oblocks;
    const std::size_t o0 = (static_cast<std::size_t>(job) % oblocks) * OT;
    const double* prow = padded.data() + b * Ci * P;
    double* o = out.data() + b * Co * K;
    switch (std::min(OT, Co - o0)) {
      case 4: conv_rows<4>(prow, weight.data(), bias.data(), o0, Ci, T, K, P, o); break;
      case 3: conv_rows<3>(prow, weight.data(), bias.data(), o0, Ci, T, K, P, o); break;
      case 2: conv_rows<2>(prow, weight.data(), bias.data(), o0, Ci, T, K, P, o); break;
      default: conv_rows<1>(prow, weight.data(), bias.data(), o0, Ci, T, K, P, o); break;
    }
  }
}

void conv1d_backward_input(const ConvShape& s, std::span<const double> dout, std::span<const double> weight,
                           std::span<double> din) {
  check(s, din.size(), weight.size(), dout.size());
  const std::size_t K = s.width;
  const std::size_t r = s.radius();
  const std::size_t P = K + 2 * r;
  const std::size_t Ci = s.in_channels;
  const std::size_t Co = s.out_channels;
  const std::size_t T = s.taps;
  std::vector<double> padded(s.batch * Co * P);
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < B; ++b) pad_rows(dout.data() + b * Co * K, Co, K, r, padded.data() + b * Co * P);

  const std::size_t iblocks = (Ci + OT - 1) / OT;
  const auto jobs = static_cast<std::ptrdiff_t>(s.batch * iblocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / iblocks;
    const std::size_t i0 = (static_cast<std::size_t>(job) % iblocks) * OT;
    const double* drow = padded.data() + b * Co * P;
    double* d = din.data() + b * Ci * K;
    switch (std::min(OT, Ci - i0)) {
      case 4: conv_t_rows<4>(drow, weight.data(), i0, Ci, Co, T, r, K, P, d); break;
      case 3: conv_t_rows<3>(drow, weight.data(), i0, Ci, Co, T, r, K, P, d); break;
      case 2: conv_t_rows<2>(drow, weight.data(), i0, Ci, Co, T, r, K, P, d); break;
      default: conv_t_rows<1>(drow, weight.data(), i0, Ci, Co, T, r, K, P, d); break;
    }
  }
}

void conv1d_backward_params(const ConvShape& s, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dweight, std::span<double> dbias) {
  check(s, in.size(), dweight.size(), dout.size());
  const std::size_t K = s.width;
  const std::size_t r = s.radius();
  const std::size_t P = K + 2 * r;
  const std::size_t Ci = s.in_channels;
  const std::size_t Co = s.out_channels;
  const std::size_t T = s.taps;
  std::vector<double> padded(s.batch * Ci * P);
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < B; ++b) pad_rows(in.data() + b * Ci * K, Ci, K, r, padded.data() + b * Ci * P);

  // partial[t][k] = sum_b dout[b,o,k] * in[b,i,k+t-r]; weight gradient = sum_k partial[t][k].
  const auto pairs = static_cast<std::ptrdiff_t>(Co * Ci);
#pragma omp parallel
  {
    std::vector<double> partial(T * K);
#pragma omp for schedule(static)
    for (std::ptrdiff_t pi = 0; pi < pairs; ++pi) {
      const std::size_t o = static_cast<std::size_t>(pi) / Ci;
      const std::size_t i = static_cast<std::size_t>(pi) % Ci;
      std::size_t k0 = 0;
      for (; k0 + KT <= K; k0 += KT) {
        double acc[KT * 9];
        const std::size_t tt = std::min<std::size_t>(T, 9);
        if (tt == T) {
          for (std::size_t j = 0; j < T * KT; ++j) acc[j] = 0.0;
          for (std::size_t b = 0; b < s.batch; ++b) {
            const double* d = dout.data() + (b * Co + o) * K + k0;
            const double* src = padded.data() + (b * Ci + i) * P + k0;
            for (std::size_t t = 0; t < T; ++t) {
#pragma omp simd
              for (std::size_t kk = 0; kk < KT; ++kk) acc[t * KT + kk] += d[kk] * src[t + kk];
            }
          }
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t kk = 0; kk < KT; ++kk) partial[t * K + k0 + kk] = acc[t * KT + kk];
        } else {
          for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t kk = 0; kk < KT; ++kk) {
              double a = 0.0;
              for (std::size_t b = 0; b < s.batch; ++b)
                a += dout[(b * Co + o) * K + k0 + kk] * padded[(b * Ci + i) * P + t + k0 + kk];
              partial[t * K + k0 + kk] = a;
            }
          }
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = k0; k < K; ++k) {
          double a = 0.0;
          for (std::size_t b = 0; b < s.batch; ++b) a += dout[(b * Co + o) * K + k] * padded[(b * Ci + i) * P + t + k];
          partial[t * K + k] = a;
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) total += partial[t * K + k];
        dweight[(o * Ci + i) * T + t] += total;
      }
    }
#pragma omp for schedule(static)
    for (std::ptrdiff_t oo = 0; oo < static_cast<std::ptrdiff_t>(Co); ++oo) {
      const auto o = static_cast<std::size_t>(oo);
      for (std::size_t k = 0; k < K; ++k) partial[k] = 0.0;
      for (std::size_t b = 0; b < s.batch; ++b) {
        const double* d = dout.data() + (b * Co + o) * K;
#pragma omp simd
        for (std::size_t k = 0; k < K; ++k) partial[k] += d[k];
      }
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) total += partial[k];
      dbias[o] += total;
    }
  }
}

}  // namespace parallel

void group_norm_forward(const NormShape& s, std::span<const double> x, std::span<const double> gamma,
                        std::span<const double> beta, std::span<double> y, std::span<double> xhat,
                        std::span<double> inv_std) {
  const std::size_t n = s.channels * s.width;
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bb = 0; bb < B; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const double* xs = x.data() + b * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xs[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xs[j] - mean) * (xs[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + s.eps);
    inv_std[b] = inv;
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t k = 0; k < s.width; ++k) {
        const std::size_t j = b * n + c * s.width + k;
        xhat[j] = (x[j] - mean) * inv;
        y[j] = gamma[c] * xhat[j] + beta[c];
      }
    }
  }
}

void group_norm_backward(const NormShape& s, std::span<const double> dy, std::span<const double> xhat,
                         std::span<const double> inv_std, std::span<const double> gamma, std::span<double> dx,
                         std::span<double> dgamma, std::span<double> dbeta) {
  const std::size_t n = s.channels * s.width;
  for (std::size_t c = 0; c < s.channels; ++c) {
    double g = 0.0;
    double bsum = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t k = 0; k < s.width; ++k) {
        const std::size_t j = b * n + c * s.width + k;
        g += dy[j] * xhat[j];
        bsum += dy[j];
      }
    }
    dgamma[c] += g;
    dbeta[c] += bsum;
  }
  const auto B = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bb = 0; bb < B; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t k = 0; k < s.width; ++k) {
        const std::size_t j = b * n + c * s.width + k;
        const double d = dy[j] * gamma[c];
        mean_d += d;
        mean_dx += d * xhat[j];
      }
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t k = 0; k < s.width; ++k) {
        const std::size_t j = b * n + c * s.width + k;
        dx[j] = inv_std[b] * (dy[j] * gamma[c] - mean_d - xhat[j] * mean_dx);
      }
    }
  }
}

void silu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (1.0 + std::exp(-x[i]));
}

void silu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sig = 1.0 / (1.0 + std::exp(-x[i]));
    dx[i] = dy[i] * sig * (1.0 + x[i] * (1.0 - sig));
  }
}

}  // namespace lrd::kernels
