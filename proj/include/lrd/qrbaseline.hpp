#pragma once

// Quintile-classification baseline: the student backbone without noise-level
// conditioning, predicting per-gridpoint probabilities of the five
// climatological quintile bins, trained with cross-entropy.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lrd/network.hpp"
#include "lrd/student.hpp"
#include "lrd/targets.hpp"

namespace lrd::qr {

inline constexpr std::size_t kBins = 5;

/// 20/40/60/80 percentiles by linear interpolation between order statistics.
/// Throws std::invalid_argument with fewer than 20 values or when the edges
/// are not strictly increasing.
std::array<double, 4> quintile_edges(std::span<const double> values);

/// Bin index 0..4: the number of edges strictly below the value.
int quintile_bin(const std::array<double, 4>& edges, double value);

struct QuintileEdges {
  std::size_t K = 0;
  std::vector<std::array<double, 4>> edges;  // [360 x K], physical units

  const std::array<double, 4>& at(int day_of_year, std::size_t k) const {
    return edges[static_cast<std::size_t>(day_of_year) * K + k];
  }
};

/// Fits edges per (day-of-year, gridpoint) from a probabilistic climatology's
/// reference-year targets.
QuintileEdges fit_quintiles(const targets::Climatology& clim);

void write_edges(const std::filesystem::path& path, const QuintileEdges& edges);
QuintileEdges read_edges(const std::filesystem::path& path);

/// Backbone shape: 4 history frames in, 5 logits out; embedding features (phase sin, phase cos).
net::ArchSpec qr_arch(int width = 64, int depth = 6, int kernel = 5);

/// Softmax probabilities [B x 5 x K] for conditioning [B x 4 x K] and phase [B x 2].
std::vector<double> qr_forward(const net::NetParams& params, std::span<const double> conditioning,
                               std::span<const double> phase, std::size_t B, std::size_t K,
                               net::ForwardCache* cache = nullptr);

/// Bin labels [B x K] of a normalized student batch.
std::vector<std::uint8_t> batch_labels(const student::Batch& batch, const QuintileEdges& edges,
                                       const targets::Normalizer& norm);

struct QrLoss {
  double loss = 0.0;
  net::Gradients grads;
  std::vector<double> per_sample;
};

/// Mean cross-entropy over samples and gridpoints and its gradient.
QrLoss qr_loss(const net::NetParams& params, const student::Batch& batch, std::span<const std::uint8_t> labels,
               bool want_grads = true);

/// Ranked probability score over the 5 ordered bins (unnormalized sum of the
/// four squared cumulative differences).
double rps(std::span<const double> probs, int observed_bin);

struct QrScores {
  double cross_entropy = 0.0;
  double rps_model = 0.0;
  double rps_climatology = 0.0;  // uniform 0.2 forecast on the same outcomes
  double skill = 0.0;            // 1 - rps_model / rps_climatology
  std::vector<double> rps_per_case;
  std::vector<double> rps_clim_per_case;
};

QrScores qr_evaluate(const net::NetParams& params, const student::Batch& batch, std::span<const std::uint8_t> labels);

/// Cross-entropy training with Adam; curves hold mean cross-entropy on fixed
/// train and validation subsets.
student::TrainResult qr_train(const student::SampleSource& train_src, const student::SampleSource& val_src,
                              const QuintileEdges& edges, const net::ArchSpec& arch,
                              const student::TrainConfig& config, const net::NetParams* init = nullptr,
                              const student::ProgressFn& progress = {});

}  // namespace lrd::qr
