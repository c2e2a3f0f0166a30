#include "lrd/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "lrd/kernels.hpp"

namespace lrd::net {

namespace kp = lrd::kernels::parallel;
using kernels::ConvShape;
using kernels::NormShape;

void ArchSpec::validate() const {
  if (width < 1 || depth < 0 || in_channels < 1 || out_channels < 1 || emb_features < 1) {
    throw std::invalid_argument("ArchSpec: non-positive dimension");
  }
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("ArchSpec: kernel must be odd");
}

std::size_t NetParams::size() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.value.size();
  return n;
}

ParamArray& NetParams::at(const std::string& name) {
  for (auto& a : arrays) if (a.name == name) return a;
  throw std::out_of_range("NetParams: no array named " + name);
}

const ParamArray& NetParams::at(const std::string& name) const {
  for (const auto& a : arrays) if (a.name == name) return a;
  throw std::out_of_range("NetParams: no array named " + name);
}

bool NetParams::operator==(const NetParams& o) const {
  if (!(arch == o.arch) || arrays.size() != o.arrays.size()) return false;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != o.arrays[i].name || arrays[i].group != o.arrays[i].group ||
        arrays[i].value != o.arrays[i].value) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const NetParams& p) {
  Gradients g;
  g.arrays.reserve(p.arrays.size());
  for (const auto& a : p.arrays) g.arrays.emplace_back(a.value.size(), 0.0);
  return g;
}

void Gradients::zero() {
  for (auto& a : arrays) std::fill(a.begin(), a.end(), 0.0);
}

void Gradients::scale(double s) {
  for (auto& a : arrays) for (double& v : a) v *= s;
}

Layout::Layout(const ArchSpec& arch) {
  std::size_t i = 0;
  in_w = i++;
  in_b = i++;
  emb_w = i++;
  emb_b = i++;
  blocks.resize(arch.depth);
  for (auto& b : blocks) {
    b.n1_g = i++;
    b.n1_b = i++;
    b.c1_w = i++;
    b.c1_b = i++;
    b.p_w = i++;
    b.p_b = i++;
    b.n2_g = i++;
    b.n2_b = i++;
    b.c2_w = i++;
    b.c2_b = i++;
  }
  no_g = i++;
  no_b = i++;
  out_w = i++;
  out_b = i++;
}

NetParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto W = static_cast<std::size_t>(arch.width);
  const auto T = static_cast<std::size_t>(arch.kernel);
  NetParams p;
  p.arch = arch;
  auto add = [&](std::string name, ParamGroup group, std::size_t n, double scale, double fill = 0.0) {
    ParamArray a{std::move(name), group, std::vector<double>(n, fill)};
    if (scale != 0.0) for (double& v : a.value) v = scale * normal(rng);
    p.arrays.push_back(std::move(a));
  };
  const auto Ci = static_cast<std::size_t>(arch.in_channels);
  const auto F = static_cast<std::size_t>(arch.emb_features);
  add("in.weight", ParamGroup::kInput, W * Ci * T, 1.0 / std::sqrt(double(Ci * T)));
  add("in.bias", ParamGroup::kInput, W, 0.0);
  add("emb.weight", ParamGroup::kEmbedding, W * F, 1.0 / std::sqrt(double(F)));
  add("emb.bias", ParamGroup::kEmbedding, W, 0.0);
  for (int b = 0; b < arch.depth; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    add(pre + "norm1.scale", ParamGroup::kNorm, W, 0.0, 1.0);
    add(pre + "norm1.offset", ParamGroup::kNorm, W, 0.0);
    add(pre + "conv1.weight", ParamGroup::kBlockConv, W * W * T, 1.0 / std::sqrt(double(W * T)));
    add(pre + "conv1.bias", ParamGroup::kBlockConv, W, 0.0);
    add(pre + "emb_proj.weight", ParamGroup::kEmbedding, W * W, 1.0 / std::sqrt(double(W)));
    add(pre + "emb_proj.bias", ParamGroup::kEmbedding, W, 0.0);
    add(pre + "norm2.scale", ParamGroup::kNorm, W, 0.0, 1.0);
    add(pre + "norm2.offset", ParamGroup::kNorm, W, 0.0);
    add(pre + "conv2.weight", ParamGroup::kBlockConv, W * W * T, 0.5 / std::sqrt(double(W * T)));
    add(pre + "conv2.bias", ParamGroup::kBlockConv, W, 0.0);
  }
  const auto Co = static_cast<std::size_t>(arch.out_channels);
  add("out.norm.scale", ParamGroup::kNorm, W, 0.0, 1.0);
  add("out.norm.offset", ParamGroup::kNorm, W, 0.0);
  add("out.weight", ParamGroup::kOutput, Co * W * T, 0.1 / std::sqrt(double(W * T)));
  add("out.bias", ParamGroup::kOutput, Co, 0.0);
  return p;
}

namespace {

// y[b,o] = bias[o] + sum_i w[o,i] x[b,i]
void dense_forward(std::size_t B, std::size_t in, std::size_t out, std::span<const double> x,
                   std::span<const double> w, std::span<const double> bias, std::span<double> y) {
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[b * in + i];
      y[b * out + o] = acc;
    }
  }
}

void dense_backward(std::size_t B, std::size_t in, std::size_t out, std::span<const double> x,
                    std::span<const double> w, std::span<const double> dy, std::span<double> dw,
                    std::span<double> dbias, std::span<double> dx) {
  for (std::size_t o = 0; o < out; ++o) {
    double bsum = 0.0;
    for (std::size_t b = 0; b < B; ++b) bsum += dy[b * out + o];
    dbias[o] += bsum;
    for (std::size_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t b = 0; b < B; ++b) acc += dy[b * out + o] * x[b * in + i];
      dw[o * in + i] += acc;
    }
  }
  if (dx.empty()) return;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += w[o * in + i] * dy[b * out + o];
      dx[b * in + i] = acc;
    }
  }
}

// x[b,c,k] += bias[b,c]
void add_channel_bias(std::size_t B, std::size_t C, std::size_t K, std::span<const double> bias, std::span<double> x) {
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k) x[(b * C + c) * K + k] += bias[b * C + c];
}

}  // namespace

std::vector<double> Backbone::forward(const NetParams& p, std::span<const double> input,
                                      std::span<const double> features, std::size_t B, std::size_t K,
                                      ForwardCache* cache) const {
  if (!(p.arch == arch_)) throw std::invalid_argument("Backbone::forward: params do not match architecture");
  const auto W = static_cast<std::size_t>(arch_.width);
  const auto Ci = static_cast<std::size_t>(arch_.in_channels);
  const auto Co = static_cast<std::size_t>(arch_.out_channels);
  const auto F = static_cast<std::size_t>(arch_.emb_features);
  const auto T = static_cast<std::size_t>(arch_.kernel);
  if (input.size() != B * Ci * K || features.size() != B * F) {
    throw std::invalid_argument("Backbone::forward: input shape mismatch");
  }
  const Layout L(arch_);
  auto arr = [&](std::size_t i) { return std::span<const double>(p.arrays[i].value); };
  const std::size_t act = B * W * K;

  std::vector<double> emb_pre(B * W), emb(B * W);
  dense_forward(B, F, W, features, arr(L.emb_w), arr(L.emb_b), emb_pre);
  kernels::silu_forward(emb_pre, emb);

  std::vector<double> h(act);
  kp::conv1d_forward({B, Ci, W, K, T}, input, arr(L.in_w), arr(L.in_b), h);
  if (cache) {
    cache->batch = B;
    cache->K = K;
    cache->input.assign(input.begin(), input.end());
    cache->features.assign(features.begin(), features.end());
    cache->emb_pre = emb_pre;
    cache->emb = emb;
    cache->h0 = h;
    cache->blocks.assign(L.blocks.size(), {});
  }

  const NormShape ns{B, W, K};
  std::vector<double> hat(act), inv(B), nout(act), s(act), c(act), ebias(B * W), tmp(act);
  for (std::size_t bi = 0; bi < L.blocks.size(); ++bi) {
    const auto& lb = L.blocks[bi];
    ForwardCache::Block* cb = cache ? &cache->blocks[bi] : nullptr;
    if (cb) cb->h_in = h;
    kernels::group_norm_forward(ns, h, arr(lb.n1_g), arr(lb.n1_b), nout, hat, inv);
    kernels::silu_forward(nout, s);
    if (cb) {
      cb->n1_hat = hat;
      cb->n1_inv = inv;
      cb->n1_out = nout;
      cb->s1 = s;
    }
    kp::conv1d_forward({B, W, W, K, T}, s, arr(lb.c1_w), arr(lb.c1_b), c);
    dense_forward(B, W, W, emb, arr(lb.p_w), arr(lb.p_b), ebias);
    add_channel_bias(B, W, K, ebias, c);
    if (cb) {
      cb->c1 = c;
      cb->emb_bias = ebias;
    }
    kernels::group_norm_forward(ns, c, arr(lb.n2_g), arr(lb.n2_b), nout, hat, inv);
    kernels::silu_forward(nout, s);
    if (cb) {
      cb->n2_hat = hat;
      cb->n2_inv = inv;
      cb->n2_out = nout;
      cb->s2 = s;
    }
    kp::conv1d_forward({B, W, W, K, T}, s, arr(lb.c2_w), arr(lb.c2_b), tmp);
    for (std::size_t j = 0; j < act; ++j) h[j] += tmp[j];
  }

  kernels::group_norm_forward(ns, h, arr(L.no_g), arr(L.no_b), nout, hat, inv);
  kernels::silu_forward(nout, s);
  std::vector<double> out(B * Co * K);
  kp::conv1d_forward({B, W, Co, K, T}, s, arr(L.out_w), arr(L.out_b), out);
  if (cache) {
    cache->h_last = h;
    cache->no_hat = hat;
    cache->no_inv = inv;
    cache->no_out = nout;
    cache->so = s;
  }
  return out;
}

std::vector<double> Backbone::backward(const NetParams& p, const ForwardCache& cache, std::span<const double> dout,
                                       Gradients& g) const {
  const auto W = static_cast<std::size_t>(arch_.width);
  const auto Ci = static_cast<std::size_t>(arch_.in_channels);
  const auto Co = static_cast<std::size_t>(arch_.out_channels);
  const auto F = static_cast<std::size_t>(arch_.emb_features);
  const auto T = static_cast<std::size_t>(arch_.kernel);
  const std::size_t B = cache.batch;
  const std::size_t K = cache.K;
  if (dout.size() != B * Co * K) throw std::invalid_argument("Backbone::backward: gradient shape mismatch");
  const Layout L(arch_);
  auto arr = [&](std::size_t i) { return std::span<const double>(p.arrays[i].value); };
  auto grad = [&](std::size_t i) { return std::span<double>(g.arrays[i]); };
  const std::size_t act = B * W * K;
  const NormShape ns{B, W, K};

  std::vector<double> ds(act), dn(act), dh(act), dc(act), tmp(act);
  std::vector<double> demb(B * W, 0.0), demb_part(B * W), debias(B * W);

  // Output head.
  kp::conv1d_backward_params({B, W, Co, K, T}, cache.so, dout, grad(L.out_w), grad(L.out_b));
  kp::conv1d_backward_input({B, W, Co, K, T}, dout, arr(L.out_w), ds);
  kernels::silu_backward(cache.no_out, ds, dn);
  kernels::group_norm_backward(ns, dn, cache.no_hat, cache.no_inv, arr(L.no_g), dh, grad(L.no_g), grad(L.no_b));

  for (std::size_t bi = L.blocks.size(); bi-- > 0;) {
    const auto& lb = L.blocks[bi];
    const auto& cb = cache.blocks[bi];
    // h_out = h_in + conv2(s2); dh flows to both.
    kp::conv1d_backward_params({B, W, W, K, T}, cb.s2, dh, grad(lb.c2_w), grad(lb.c2_b));
    kp::conv1d_backward_input({B, W, W, K, T}, dh, arr(lb.c2_w), ds);
    kernels::silu_backward(cb.n2_out, ds, dn);
    kernels::group_norm_backward(ns, dn, cb.n2_hat, cb.n2_inv, arr(lb.n2_g), dc, grad(lb.n2_g), grad(lb.n2_b));
    // c1 = conv1(s1) + emb_bias broadcast over K.
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < W; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += dc[(b * W + c) * K + k];
        debias[b * W + c] = acc;
      }
    }
    dense_backward(B, W, W, cache.emb, arr(lb.p_w), debias, grad(lb.p_w), grad(lb.p_b), demb_part);
    for (std::size_t j = 0; j < B * W; ++j) demb[j] += demb_part[j];
    kp::conv1d_backward_params({B, W, W, K, T}, cb.s1, dc, grad(lb.c1_w), grad(lb.c1_b));
    kp::conv1d_backward_input({B, W, W, K, T}, dc, arr(lb.c1_w), ds);
    kernels::silu_backward(cb.n1_out, ds, dn);
    kernels::group_norm_backward(ns, dn, cb.n1_hat, cb.n1_inv, arr(lb.n1_g), tmp, grad(lb.n1_g), grad(lb.n1_b));
    for (std::size_t j = 0; j < act; ++j) dh[j] += tmp[j];
  }

  // Embedding MLP.
  std::vector<double> demb_pre(B * W);
  kernels::silu_backward(cache.emb_pre, demb, demb_pre);
  dense_backward(B, F, W, cache.features, arr(L.emb_w), demb_pre, grad(L.emb_w), grad(L.emb_b), {});

  std::vector<double> din(B * Ci * K);
  kp::conv1d_backward_params({B, Ci, W, K, T}, cache.input, dh, grad(L.in_w), grad(L.in_b));
  kp::conv1d_backward_input({B, Ci, W, K, T}, dh, arr(L.in_w), din);
  return din;
}

}  // namespace lrd::net
