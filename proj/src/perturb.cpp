#include "lrd/perturb.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "lrd/log.hpp"

namespace lrd::perturb {

void PerturbationSpec::validate() const {
  if (!(amplitude >= 0.0) || !(length_scale > 0.0) || !(time_scale > 0.0)) {
    throw std::invalid_argument("PerturbationSpec: amplitude >= 0, length_scale > 0 and time_scale > 0 required");
  }
}

double matern32(double distance, double length_scale, double amplitude) {
  const double r = std::sqrt(3.0) * distance / length_scale;
  return amplitude * amplitude * (1.0 + r) * std::exp(-r);
}

NoiseGenerator::NoiseGenerator(const PerturbationSpec& spec, std::size_t K) : spec_(spec), K_(K) {
  spec.validate();
  if (K == 0) throw std::invalid_argument("NoiseGenerator: K must be positive");
  const double two_pi = 2.0 * std::numbers::pi;
  const auto n = static_cast<double>(K);
  std::vector<double> c(K);
  for (std::size_t d = 0; d < K; ++d) {
    c[d] = matern32(static_cast<double>(std::min(d, K - d)), spec.length_scale);
  }
  // Eigenvalues of a symmetric circulant matrix are the DFT of its first row.
  std::vector<double> sqrt_lambda(K);
  double largest = 0.0;
  double most_negative = 0.0;
  for (std::size_t m = 0; m < K; ++m) {
    double lam = 0.0;
    for (std::size_t d = 0; d < K; ++d) lam += c[d] * std::cos(two_pi * static_cast<double>(m * d % K) / n);
    largest = std::max(largest, lam);
    if (lam < 0.0) {
      ++clipped_;
      most_negative = std::min(most_negative, lam);
      lam = 0.0;
    }
    sqrt_lambda[m] = std::sqrt(lam);
  }
  if (clipped_ > 0 && -most_negative > 1e-12 * largest) {
    log::warn("matern covariance: clipped " + std::to_string(clipped_) + " negative eigenvalue(s), most negative " +
              std::to_string(most_negative));
  }
  root_.assign(K, 0.0);
  for (std::size_t d = 0; d < K; ++d) {
    double s = 0.0;
    for (std::size_t m = 0; m < K; ++m) s += sqrt_lambda[m] * std::cos(two_pi * static_cast<double>(m * d % K) / n);
    root_[d] = s / n;
  }
  double var = 0.0;
  for (double r : root_) var += r * r;
  const double scale = spec.amplitude / std::sqrt(var);
  for (double& r : root_) r *= scale;
}

double NoiseGenerator::covariance(std::size_t lag) const {
  double s = 0.0;
  for (std::size_t j = 0; j < K_; ++j) s += root_[j] * root_[(j + lag) % K_];
  return s;
}

std::vector<double> NoiseGenerator::sample(Rng& rng, std::size_t num_frames) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = std::isinf(spec_.time_scale) ? 1.0 : std::exp(-1.0 / spec_.time_scale);
  const double innov = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  std::vector<double> out(num_frames * K_);
  std::vector<double> z(K_), field(K_);
  for (std::size_t f = 0; f < num_frames; ++f) {
    for (double& v : z) v = normal(rng);
    for (std::size_t k = 0; k < K_; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < K_; ++j) s += root_[(k + K_ - j) % K_] * z[j];
      field[k] = s;
    }
    double* row = out.data() + f * K_;
    if (f == 0) {
      std::copy(field.begin(), field.end(), row);
    } else {
      const double* prev = row - K_;
      for (std::size_t k = 0; k < K_; ++k) row[k] = rho * prev[k] + innov * field[k];
    }
  }
  return out;
}

std::vector<double> correlated_noise(Rng& rng, const PerturbationSpec& spec, std::size_t num_frames, std::size_t K) {
  return NoiseGenerator(spec, K).sample(rng, num_frames);
}

std::vector<double> perturb_ic(std::span<const double> conditioning, std::span<const double> noise) {
  if (conditioning.size() != noise.size()) throw std::invalid_argument("perturb_ic: shape mismatch");
  std::vector<double> out(conditioning.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = conditioning[i] + noise[i];
  return out;
}

dynsys::SystemState perturb_state(dynsys::SystemState state, std::span<const double> unit_noise, double amplitude,
                                  double physical_std) {
  if (unit_noise.size() != state.X.size()) throw std::invalid_argument("perturb_state: shape mismatch");
  if (amplitude == 0.0) return state;
  for (std::size_t k = 0; k < state.X.size(); ++k) state.X[k] += amplitude * unit_noise[k] * physical_std;
  return state;
}

double perturbed_rmse(const TuningProblem& p, double amplitude) {
  if (p.nature == nullptr) throw std::invalid_argument("perturbed_rmse: no nature run");
  const auto& traj = p.nature->trajectory;
  const std::size_t K = traj.K;
  PerturbationSpec unit = p.shape;
  unit.amplitude = 1.0;
  const NoiseGenerator gen(unit, K);
  std::vector<double> sq(p.cases.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t c = 0; c < p.cases.size(); ++c) {
    const std::size_t n0 = p.cases[c];
    Rng rng(child_seed(p.seed, c));
    const auto noise = gen.sample(rng, 1);
    const auto state = perturb_state(p.nature->snapshots.at(n0), noise, amplitude, p.physical_std);
    const auto frames = datagen::forecast_frames(p.params, state, p.lead_days, p.save_window);
    const auto truth = traj.frame(n0 + static_cast<std::size_t>(p.lead_days));
    const float* fc = frames.data() + static_cast<std::size_t>(p.lead_days - 1) * K;
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = static_cast<double>(fc[k]) - static_cast<double>(truth[k]);
      s += e * e;
    }
    sq[c] = s;
  }
  double total = 0.0;
  for (double s : sq) total += s;
  return std::sqrt(total / static_cast<double>(p.cases.size() * K));
}

TuneResult tune_amplitude(const TuningProblem& problem, double target_rmse, double max_amplitude, double rel_tol,
                          int grid_points) {
  if (problem.cases.size() < 100) {
    throw std::invalid_argument("tune_amplitude: needs at least 100 tuning cases, got " +
                                std::to_string(problem.cases.size()));
  }
  if (!(target_rmse >= 0.0) || !(max_amplitude > 0.0) || grid_points < 2) {
    throw std::invalid_argument("tune_amplitude: bad arguments");
  }
  TuneResult res;
  for (int i = 0; i < grid_points; ++i) {
    const double a = max_amplitude * i / (grid_points - 1);
    res.grid_amplitudes.push_back(a);
    res.grid_rmse.push_back(perturbed_rmse(problem, a));
    if (i > 0 && res.grid_rmse[i] < (1.0 - rel_tol) * res.grid_rmse[i - 1]) {
      throw std::runtime_error("tune_amplitude: RMSE decreases between amplitudes " +
                               std::to_string(res.grid_amplitudes[i - 1]) + " and " + std::to_string(a));
    }
  }
  auto close = [&](double r) { return std::abs(r - target_rmse) <= rel_tol * target_rmse; };
  if (close(res.grid_rmse.front())) {
    res.amplitude = 0.0;
    res.achieved_rmse = res.grid_rmse.front();
    return res;
  }
  if (target_rmse < res.grid_rmse.front() || target_rmse > res.grid_rmse.back() * (1.0 + rel_tol)) {
    throw std::runtime_error("tune_amplitude: target RMSE " + std::to_string(target_rmse) + " outside reachable range [" +
                             std::to_string(res.grid_rmse.front()) + ", " + std::to_string(res.grid_rmse.back()) + "]");
  }
  // Bracket from the grid, then bisect.
  std::size_t hi = 1;
  while (hi + 1 < res.grid_rmse.size() && res.grid_rmse[hi] < target_rmse) ++hi;
  double lo_a = res.grid_amplitudes[hi - 1];
  double hi_a = res.grid_amplitudes[hi];
  if (close(res.grid_rmse[hi])) {
    res.amplitude = hi_a;
    res.achieved_rmse = res.grid_rmse[hi];
    return res;
  }
  constexpr int kMaxIterations = 60;
  for (int it = 1; it <= kMaxIterations; ++it) {
    const double mid = 0.5 * (lo_a + hi_a);
    const double r = perturbed_rmse(problem, mid);
    res.iterations = it;
    res.amplitude = mid;
    res.achieved_rmse = r;
    if (close(r)) return res;
    (r < target_rmse ? lo_a : hi_a) = mid;
  }
  throw std::runtime_error("tune_amplitude: bisection did not converge");
}

}  // namespace lrd::perturb
