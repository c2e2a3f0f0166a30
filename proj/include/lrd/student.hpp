#pragma once

// Distilled diffusion student: EDM-preconditioned denoiser on the ring,
// weighted denoising loss with log-uniform noise levels, condition dropout
// for classifier-free guidance, Adam, training and frozen-subset fine-tuning.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lrd/datagen.hpp"
#include "lrd/error.hpp"
#include "lrd/network.hpp"
#include "lrd/rng.hpp"
#include "lrd/targets.hpp"

namespace lrd::student {

struct SigmaSpec {
  double sigma_min = 0.002;
  double sigma_max = 200.0;
  double sigma_data = 1.0;

  void validate() const;
};

struct Preconditioning {
  double c_skip = 0.0;
  double c_out = 0.0;
  double c_in = 0.0;
  double c_noise = 0.0;
};

/// c_skip = sd^2/(s^2+sd^2), c_out = s*sd/sqrt(s^2+sd^2), c_in = 1/sqrt(s^2+sd^2),
/// c_noise = ln(s)/4. Throws std::invalid_argument for sigma <= 0.
Preconditioning precondition(double sigma, const SigmaSpec& spec);

/// Loss weight (s^2 + sd^2) / (s*sd)^2.
double loss_weight(double sigma, const SigmaSpec& spec);

/// sigma = exp(u) with u uniform on [ln sigma_min, ln sigma_max].
double sample_sigma(Rng& rng, const SigmaSpec& spec);
/// Inverse-CDF form of sample_sigma for a unit uniform u.
double sigma_from_unit(double u, const SigmaSpec& spec);

/// Denoiser backbone shape: noised state + 4 history frames in, one channel out;
/// embedding features (c_noise, sin(pi c_noise), cos(pi c_noise), phase sin, phase cos).
net::ArchSpec denoiser_arch(int width = 64, int depth = 6, int kernel = 5);

/// A batch of conditioning/target data in normalized units.
struct Batch {
  std::size_t size = 0;
  std::size_t K = 0;
  std::vector<double> conditioning;  // [B x 4 x K]
  std::vector<double> phase;         // [B x 2]
  std::vector<double> target;        // [B x K]
  std::vector<int> day_of_year;      // [B]
};

/// Denoised estimate D(x; sigma, cond) for a batch. Rows with dropped[b] != 0
/// see an all-zero conditioning tensor. The phase is never dropped.
std::vector<double> denoise(const net::NetParams& params, const SigmaSpec& spec, std::span<const double> x_noised,
                            std::span<const double> sigma, std::span<const double> conditioning,
                            std::span<const double> phase, std::span<const std::uint8_t> dropped, std::size_t K,
                            net::ForwardCache* cache = nullptr);

/// Single-sample convenience wrapper.
std::vector<double> forward(const net::NetParams& params, const SigmaSpec& spec, std::span<const double> x_noised,
                            double sigma, std::span<const double> conditioning, std::array<double, 2> phase,
                            bool cond_dropped);

/// Per-sample noise draw for the denoising loss.
struct EdmDraw {
  double sigma = 1.0;
  std::vector<double> unit_noise;  // [K] standard normal; injected noise = sigma * unit_noise
  bool dropped = false;
};

std::vector<EdmDraw> draw_edm(Rng& rng, std::size_t batch, std::size_t K, const SigmaSpec& spec,
                              double dropout_prob);

struct LossResult {
  double loss = 0.0;
  net::Gradients grads;
  std::vector<double> per_sample;
};

/// Mean over the batch of lambda(sigma) * mean_k (D - target)^2 and, when
/// requested, its gradient. Throws NumericError naming the first sample with
/// a non-finite loss.
LossResult edm_loss(const net::NetParams& params, const SigmaSpec& spec, const Batch& batch,
                    std::span<const EdmDraw> draws, bool want_grads = true);

/// Draws sigma, noise and dropout (probability dropout_prob) from rng.
LossResult edm_loss(const net::NetParams& params, const SigmaSpec& spec, const Batch& batch, Rng& rng,
                    double dropout_prob = 0.1);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const net::NetParams& p);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. Arrays with trainable[i] == false are left
/// untouched (value and moments). The step counter always advances.
void adam_step(net::NetParams& params, const net::Gradients& grads, AdamState& state, double lr,
               const std::vector<bool>& trainable = {}, const AdamConfig& cfg = {});

/// Arrays updated during fine-tuning: input projection, output block and
/// every normalization scale/offset.
std::vector<bool> finetune_mask(const net::NetParams& params);

/// Index over (trajectory, init frame) pairs with on-the-fly batch assembly.
class SampleSource {
 public:
  SampleSource() = default;
  /// Uses at most frame_budget frames in total (members consumed in order);
  /// 0 means every stable frame.
  SampleSource(std::span<const datagen::Trajectory> trajs, const targets::LeadSpec& lead, int save_window,
               const targets::Normalizer& norm, std::size_t frame_budget = 0, std::size_t stride = 1);

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t frames_used() const noexcept { return frames_used_; }
  Batch make_batch(std::span<const std::size_t> rows) const;
  /// Raw (unnormalized) sample.
  targets::TrainingSample sample(std::size_t row) const;
  const targets::LeadSpec& lead() const noexcept { return lead_; }
  const targets::Normalizer& normalizer() const noexcept { return norm_; }

 private:
  struct Entry {
    const datagen::Trajectory* traj;
    std::size_t n0;
  };
  std::vector<Entry> index_;
  targets::LeadSpec lead_;
  int save_window_ = 4;
  targets::Normalizer norm_;
  std::size_t frames_used_ = 0;
};

struct TrainConfig {
  int steps = 1000;
  int batch = 64;
  double lr = 1e-4;
  double dropout = 0.1;
  int eval_every = 100;
  int eval_samples = 2048;
  std::uint64_t seed = 0;
  std::vector<bool> trainable;  // empty: every array
};

struct CurvePoint {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  net::NetParams best;
  net::NetParams last;
  AdamState optimizer;
  std::vector<CurvePoint> curve;
  int best_step = 0;
  double best_val = 0.0;
  std::vector<double> best_val_per_sample;
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, net::NetParams last_good, int step)
      : NumericError(what), last_good_(std::move(last_good)), step_(step) {}
  const net::NetParams& last_good() const noexcept { return last_good_; }
  int step() const noexcept { return step_; }

 private:
  net::NetParams last_good_;
  int step_;
};

/// Fixed evaluation set: rows, noise levels on a stratified log-uniform grid
/// and noise vectors from a fixed seed, shared between train and validation.
struct EvalSet {
  Batch batch;
  std::vector<EdmDraw> draws;
};

EvalSet make_eval_set(const SampleSource& source, std::size_t n, const SigmaSpec& spec, std::uint64_t seed);
std::vector<double> eval_losses(const net::NetParams& params, const SigmaSpec& spec, const EvalSet& set);

using ProgressFn = std::function<void(const CurvePoint&)>;

/// Trains from `init` (or a fresh seeded initialization when null).
TrainResult train(const SampleSource& train_src, const SampleSource& val_src, const SigmaSpec& spec,
                  const net::ArchSpec& arch, const TrainConfig& config, const net::NetParams* init = nullptr,
                  const ProgressFn& progress = {});

/// Fine-tunes the frozen-subset arrays at config.lr (callers pass the
/// pretraining rate divided by ten).
TrainResult finetune(const net::NetParams& pretrained, const SampleSource& train_src, const SampleSource& val_src,
                     const SigmaSpec& spec, TrainConfig config, const ProgressFn& progress = {});

struct Checkpoint {
  std::string model_kind = "diffusion";  // or "quantile"
  net::NetParams params;
  AdamState optimizer;
  std::int64_t step = 0;
  SigmaSpec sigma;
  targets::LeadSpec lead;
  targets::Normalizer normalizer;

  bool operator==(const Checkpoint& o) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws MissingInputError when absent.
Checkpoint read_checkpoint(const std::filesystem::path& path);

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

}  // namespace lrd::student
