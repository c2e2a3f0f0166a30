#pragma once

// Residual circular-convolution backbone on the periodic ring.
//
//   h0  = conv_in(input)
//   e   = silu(W_e f + b_e)                      f: per-sample embedding features
//   blk = h + conv2(silu(norm2(conv1(silu(norm1(h))) + P e + p)))
//   out = conv_out(silu(norm_out(h_depth)))
//
// All convolutions are circular, so the map is equivariant under cyclic
// shifts of every spatial input. Gradients are computed in reverse order over
// the cached forward activations.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrd/rng.hpp"

namespace lrd::net {

struct ArchSpec {
  int width = 64;
  int depth = 6;
  int kernel = 5;
  int in_channels = 5;
  int out_channels = 1;
  int emb_features = 5;

  void validate() const;
  bool operator==(const ArchSpec&) const = default;
};

/// Trainable-subset tags used by the fine-tuning freeze contract.
enum class ParamGroup : std::uint8_t { kInput = 0, kEmbedding = 1, kBlockConv = 2, kNorm = 3, kOutput = 4 };

struct ParamArray {
  std::string name;
  ParamGroup group = ParamGroup::kBlockConv;
  std::vector<double> value;
};

struct NetParams {
  ArchSpec arch;
  std::vector<ParamArray> arrays;

  std::size_t size() const;  // total scalar count
  ParamArray& at(const std::string& name);
  const ParamArray& at(const std::string& name) const;
  bool operator==(const NetParams& o) const;
};

/// Gradient buffers mirroring a NetParams layout.
struct Gradients {
  std::vector<std::vector<double>> arrays;

  static Gradients zeros_like(const NetParams& p);
  void zero();
  void scale(double s);
};

/// Randomly initialized parameters (deterministic in seed).
NetParams init_params(const ArchSpec& arch, std::uint64_t seed);

/// Activations kept by forward for backward.
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t K = 0;
  std::vector<double> input;
  std::vector<double> features;
  std::vector<double> emb_pre, emb;
  std::vector<double> h0;
  struct Block {
    std::vector<double> h_in;
    std::vector<double> n1_hat, n1_inv, n1_out, s1;
    std::vector<double> c1, emb_bias;
    std::vector<double> n2_hat, n2_inv, n2_out, s2;
  };
  std::vector<Block> blocks;
  std::vector<double> h_last;
  std::vector<double> no_hat, no_inv, no_out, so;
};

class Backbone {
 public:
  explicit Backbone(const ArchSpec& arch) : arch_(arch) { arch_.validate(); }

  /// input [B x in_channels x K], features [B x emb_features] -> [B x out_channels x K].
  /// When cache is non-null the activations needed by backward are retained.
  std::vector<double> forward(const NetParams& params, std::span<const double> input,
                              std::span<const double> features, std::size_t batch, std::size_t K,
                              ForwardCache* cache) const;

  /// Accumulates parameter gradients for dL/d(output). Returns dL/d(input).
  std::vector<double> backward(const NetParams& params, const ForwardCache& cache,
                               std::span<const double> dout, Gradients& grads) const;

  const ArchSpec& arch() const noexcept { return arch_; }

 private:
  ArchSpec arch_;
};

/// Indices into NetParams::arrays for a given architecture.
struct Layout {
  std::size_t in_w, in_b, emb_w, emb_b;
  struct Block {
    std::size_t n1_g, n1_b, c1_w, c1_b, p_w, p_b, n2_g, n2_b, c2_w, c2_b;
  };
  std::vector<Block> blocks;
  std::size_t no_g, no_b, out_w, out_b;

  explicit Layout(const ArchSpec& arch);
};

}  // namespace lrd::net
