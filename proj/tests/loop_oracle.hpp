#pragma once

// Scalar-loop evaluation of the ring backbone for a single sample, written
// straight from the layer equations with no shared kernels.

#include <cmath>
#include <vector>

#include "lrd/network.hpp"

namespace lrd::check {

inline double loop_silu(double x) { return x / (1.0 + std::exp(-x)); }

// h[c][k], weights [out][in][taps]
inline std::vector<std::vector<double>> loop_conv(const std::vector<std::vector<double>>& in, const std::vector<double>& w,
                                                  const std::vector<double>& bias, int out_ch, int taps) {
  const int in_ch = static_cast<int>(in.size());
  const int K = static_cast<int>(in[0].size());
  const int r = taps / 2;
  std::vector<std::vector<double>> out(out_ch, std::vector<double>(K));
  for (int o = 0; o < out_ch; ++o)
    for (int k = 0; k < K; ++k) {
      double s = bias[o];
      for (int i = 0; i < in_ch; ++i)
        for (int t = 0; t < taps; ++t) s += w[(o * in_ch + i) * taps + t] * in[i][((k + t - r) % K + K) % K];
      out[o][k] = s;
    }
  return out;
}

inline std::vector<std::vector<double>> loop_norm_silu(const std::vector<std::vector<double>>& x,
                                                       const std::vector<double>& gamma, const std::vector<double>& beta) {
  double n = 0.0, mean = 0.0, var = 0.0;
  for (const auto& row : x)
    for (double v : row) {
      mean += v;
      n += 1.0;
    }
  mean /= n;
  for (const auto& row : x)
    for (double v : row) var += (v - mean) * (v - mean);
  var /= n;
  auto out = x;
  for (std::size_t c = 0; c < x.size(); ++c)
    for (std::size_t k = 0; k < x[c].size(); ++k)
      out[c][k] = loop_silu(gamma[c] * (x[c][k] - mean) / std::sqrt(var + 1e-5) + beta[c]);
  return out;
}

/// input [in_channels][K], features [emb_features] -> [out_channels][K]
inline std::vector<std::vector<double>> loop_backbone(const net::NetParams& p,
                                                      const std::vector<std::vector<double>>& input,
                                                      const std::vector<double>& features) {
  const auto& a = p.arch;
  auto v = [&](const std::string& name) { return p.at(name).value; };
  std::vector<double> e(a.width);
  const auto ew = v("emb.weight"), eb = v("emb.bias");
  for (int o = 0; o < a.width; ++o) {
    double s = eb[o];
    for (int i = 0; i < a.emb_features; ++i) s += ew[o * a.emb_features + i] * features[i];
    e[o] = loop_silu(s);
  }
  auto h = loop_conv(input, v("in.weight"), v("in.bias"), a.width, a.kernel);
  for (int b = 0; b < a.depth; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    auto t = loop_norm_silu(h, v(pre + "norm1.scale"), v(pre + "norm1.offset"));
    auto c = loop_conv(t, v(pre + "conv1.weight"), v(pre + "conv1.bias"), a.width, a.kernel);
    const auto pw = v(pre + "emb_proj.weight"), pb = v(pre + "emb_proj.bias");
    for (int o = 0; o < a.width; ++o) {
      double s = pb[o];
      for (int i = 0; i < a.width; ++i) s += pw[o * a.width + i] * e[i];
      for (double& x : c[o]) x += s;
    }
    t = loop_norm_silu(c, v(pre + "norm2.scale"), v(pre + "norm2.offset"));
    const auto d = loop_conv(t, v(pre + "conv2.weight"), v(pre + "conv2.bias"), a.width, a.kernel);
    for (int o = 0; o < a.width; ++o)
      for (std::size_t k = 0; k < h[o].size(); ++k) h[o][k] += d[o][k];
  }
  const auto t = loop_norm_silu(h, v("out.norm.scale"), v("out.norm.offset"));
  return loop_conv(t, v("out.weight"), v("out.bias"), a.out_channels, a.kernel);
}

}  // namespace lrd::check
