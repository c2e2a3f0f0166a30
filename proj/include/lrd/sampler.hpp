#pragma once

// Deterministic EDM ODE sampling (Heun with a final Euler step) with
// classifier-free guidance, ensemble generation, guidance sweeps and the
// forecast archive.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lrd/network.hpp"
#include "lrd/rng.hpp"
#include "lrd/student.hpp"
#include "lrd/targets.hpp"

namespace lrd::sampler {

struct SamplerConfig {
  int num_steps = 18;
  double sigma_min = 0.002;
  double sigma_max = 200.0;
  double rho = 7.0;
  double guidance = 1.0;
  int ensemble_size = 32;
  double s_churn = 0.0;

  void validate() const;
};

/// Karras schedule of num_steps levels from sigma_max to sigma_min, then 0.
std::vector<double> sigma_schedule(const SamplerConfig& config);

/// Batched denoiser D(x; sigma, conditioning). x is [B x K], conditioning
/// [B x 4 x K], phase [B x 2]. `conditional == false` asks for the
/// unconditional branch.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::vector<double> operator()(std::span<const double> x, double sigma, std::span<const double> conditioning,
                                         std::span<const double> phase, std::size_t B, std::size_t K,
                                         bool conditional) const = 0;
};

class StudentDenoiser final : public Denoiser {
 public:
  StudentDenoiser(const net::NetParams& params, const student::SigmaSpec& spec) : params_(params), spec_(spec) {}
  std::vector<double> operator()(std::span<const double> x, double sigma, std::span<const double> conditioning,
                                 std::span<const double> phase, std::size_t B, std::size_t K,
                                 bool conditional) const override;

 private:
  const net::NetParams& params_;
  student::SigmaSpec spec_;
};

/// Exact denoiser for data distributed N(mu, sd^2) independently per point:
/// D = (sd^2 x + sigma^2 mu) / (sd^2 + sigma^2). Ignores conditioning.
class GaussianDenoiser final : public Denoiser {
 public:
  GaussianDenoiser(double mu, double sd) : mu_(mu), sd_(sd) {}
  std::vector<double> operator()(std::span<const double> x, double sigma, std::span<const double> conditioning,
                                 std::span<const double> phase, std::size_t B, std::size_t K,
                                 bool conditional) const override;

 private:
  double mu_, sd_;
};

/// D(x) = x.
class IdentityDenoiser final : public Denoiser {
 public:
  std::vector<double> operator()(std::span<const double> x, double, std::span<const double>, std::span<const double>,
                                 std::size_t, std::size_t, bool) const override {
    return {x.begin(), x.end()};
  }
};

/// D_u + w (D_c - D_u). w == 1 evaluates only the conditional branch and
/// w == 0 only the unconditional one.
std::vector<double> guided_denoise(const Denoiser& denoiser, std::span<const double> x, double sigma,
                                   std::span<const double> conditioning, std::span<const double> phase, std::size_t B,
                                   std::size_t K, double w);

/// Solves B independent trajectories; row b starts from sigma_max times a
/// standard normal vector drawn from Rng(seeds[b]). Throws NumericError on a
/// non-finite intermediate state.
std::vector<double> sample_batch(const Denoiser& denoiser, std::span<const double> conditioning,
                                 std::span<const double> phase, std::size_t K, const SamplerConfig& config,
                                 std::span<const std::uint64_t> seeds);

/// One sample; the initial noise is drawn from rng, so heun_solve with
/// Rng(seed) equals row b of sample_batch with seeds[b] == seed.
std::vector<double> heun_solve(const Denoiser& denoiser, std::span<const double> conditioning,
                               std::array<double, 2> phase, std::size_t K, const SamplerConfig& config, Rng& rng);

struct EnsembleForecast {
  std::size_t E = 0;
  std::size_t K = 0;
  std::vector<double> members;  // [E x K]
  double init_time = 0.0;
  targets::LeadLabel lead = targets::LeadLabel::kS2S;
  double guidance = 1.0;
  std::uint64_t seed = 0;

  std::span<const double> member(std::size_t e) const { return {members.data() + e * K, K}; }
};

/// Member i is the solution started from Rng(child_seed(seed, i)).
EnsembleForecast generate_ensemble(const Denoiser& denoiser, std::span<const double> conditioning,
                                   std::array<double, 2> phase, std::size_t K, const SamplerConfig& config,
                                   std::uint64_t seed);

/// A verification case: normalized conditioning and the physical-unit truth.
struct ForecastCase {
  std::vector<double> conditioning;  // [4 x K], normalized
  std::array<double, 2> phase{};
  std::vector<double> truth;  // [K]
  double init_time = 0.0;
  int day_of_year = 0;
};

/// Ensembles for every case in physical units (inverse-normalized).
/// Case c uses ensemble seed child_seed(seed, c).
std::vector<EnsembleForecast> forecast_cases(const Denoiser& denoiser, std::span<const ForecastCase> cases,
                                             const targets::Normalizer& norm, const SamplerConfig& config,
                                             targets::LeadLabel lead, std::uint64_t seed);

struct SweepPoint {
  double guidance = 0.0;
  double spread = 0.0;
  double rmse = 0.0;
  double crps = 0.0;
  double spread_skill = 0.0;
  std::vector<double> crps_per_case;  // global mean per case
};

/// Scores each guidance weight on the same cases and the same noise seeds.
std::vector<SweepPoint> guidance_sweep(const Denoiser& denoiser, std::span<const ForecastCase> cases,
                                       const targets::Normalizer& norm, std::span<const double> weights,
                                       SamplerConfig config, std::uint64_t seed);

/// Writes `forecasts.bin` (E x K float32 blocks) and `forecasts.json` (index).
void write_forecast_archive(const std::filesystem::path& dir, std::span<const EnsembleForecast> forecasts);
std::vector<EnsembleForecast> read_forecast_archive(const std::filesystem::path& dir);

}  // namespace lrd::sampler
