#pragma once

// Spatially and temporally correlated Gaussian perturbations on the ring and
// the amplitude calibration against a target medium-range error.

#include <cstdint>
#include <span>
#include <vector>

#include "lrd/datagen.hpp"
#include "lrd/dynsys.hpp"
#include "lrd/rng.hpp"

namespace lrd::perturb {

struct PerturbationSpec {
  double amplitude = 0.1;     // marginal std, normalized units
  double length_scale = 4.0;  // gridpoints
  double time_scale = 2.0;    // frames; +inf gives identical frames

  void validate() const;
};

/// a^2 (1 + sqrt(3) d / l) exp(-sqrt(3) d / l).
double matern32(double distance, double length_scale, double amplitude = 1.0);

/// Circulant square root of the ring covariance. Negative eigenvalues are
/// clipped to zero and the result rescaled so the marginal std is exactly
/// `amplitude`.
class NoiseGenerator {
 public:
  NoiseGenerator(const PerturbationSpec& spec, std::size_t K);

  /// [num_frames x K]: independent spatial fields chained by AR(1) with
  /// coefficient exp(-1 / time_scale).
  std::vector<double> sample(Rng& rng, std::size_t num_frames) const;
  /// Covariance actually realized at ring lag d (after clipping).
  double covariance(std::size_t lag) const;
  std::size_t clipped_eigenvalues() const noexcept { return clipped_; }
  std::size_t K() const noexcept { return K_; }
  const PerturbationSpec& spec() const noexcept { return spec_; }

 private:
  PerturbationSpec spec_;
  std::size_t K_;
  std::vector<double> root_;  // first row of the symmetric circulant square root
  std::size_t clipped_ = 0;
};

std::vector<double> correlated_noise(Rng& rng, const PerturbationSpec& spec, std::size_t num_frames, std::size_t K);

/// Elementwise sum; throws std::invalid_argument on a shape mismatch.
std::vector<double> perturb_ic(std::span<const double> conditioning, std::span<const double> noise);

/// Adds amplitude * noise * physical_std to the slow variables of a teacher state.
dynsys::SystemState perturb_state(dynsys::SystemState state, std::span<const double> unit_noise, double amplitude,
                                  double physical_std);

struct TuningProblem {
  dynsys::SystemParams params;
  const datagen::NatureRun* nature = nullptr;
  std::vector<std::size_t> cases;  // initialization frames n0
  int lead_days = 7;
  int save_window = 4;
  double physical_std = 1.0;  // normalizer std
  PerturbationSpec shape;     // amplitude ignored
  std::uint64_t seed = 0;
};

/// Single-member RMSE of the teacher's lead_days frame against the nature
/// run, over every case, for one amplitude. The unit noise of case c comes
/// from Rng(child_seed(seed, c)) so every amplitude sees the same draws.
double perturbed_rmse(const TuningProblem& problem, double amplitude);

struct TuneResult {
  double amplitude = 0.0;
  double achieved_rmse = 0.0;
  int iterations = 0;
  std::vector<double> grid_amplitudes;
  std::vector<double> grid_rmse;
};

/// Bisection on amplitude in [0, max_amplitude] until the RMSE is within
/// rel_tol of target_rmse. Verifies on a grid that the RMSE is nondecreasing
/// in amplitude first; dips smaller than rel_tol (sampling noise once the
/// error saturates) count as flat. Throws std::invalid_argument with fewer than 100 cases
/// and std::runtime_error when the target is out of reach or the curve is not
/// monotone.
TuneResult tune_amplitude(const TuningProblem& problem, double target_rmse, double max_amplitude = 2.0,
                          double rel_tol = 0.02, int grid_points = 9);

}  // namespace lrd::perturb
