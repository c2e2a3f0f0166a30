#pragma once

// Two-scale Lorenz-96 teacher with a seasonally modulated forcing.

#include <cstddef>
#include <span>
#include <vector>

namespace lrd::dynsys {

struct SystemParams {
  int K = 40;              // slow variables
  int J = 4;               // fast variables per slow variable
  double F0 = 8.0;         // base forcing
  double A_seas = 2.0;     // seasonal forcing amplitude
  double T_seas = 72.0;    // seasonal period: 360 days of 4 x 0.05
  double h = 1.0;          // coupling strength
  double c = 10.0;         // fast timescale ratio
  double b = 10.0;         // fast amplitude ratio
  double dt = 0.005;       // RK4 step
  double step_equiv = 0.05;  // model time per teacher step (6-hour analog)

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  /// RK4 substeps per teacher step.
  int substeps() const;
};

struct SystemState {
  std::vector<double> X;  // K slow values
  std::vector<double> Y;  // K*J fast values, fast ring index j + J*k
  double t = 0.0;

  bool operator==(const SystemState&) const = default;
};

struct StateDerivative {
  std::vector<double> dX;
  std::vector<double> dY;
};

double seasonal_forcing(double t, const SystemParams& params);

/// Right-hand side. Throws std::domain_error naming the first non-finite index.
StateDerivative tendency(const SystemState& state, const SystemParams& params);

/// Allocation-free variant used by the integrator.
void tendency_into(std::span<const double> X, std::span<const double> Y, double t,
                   const SystemParams& params, std::span<double> dX, std::span<double> dY);

/// One classical RK4 step of size params.dt. Throws InstabilityError on non-finite output.
SystemState step_rk4(const SystemState& state, const SystemParams& params);

/// step_equiv / dt RK4 substeps.
SystemState advance_teacher_step(const SystemState& state, const SystemParams& params);

/// Reusable RK4 workspace; bitwise identical to step_rk4.
class Integrator {
 public:
  explicit Integrator(const SystemParams& params);

  void step(SystemState& state);
  void teacher_step(SystemState& state);
  const SystemParams& params() const noexcept { return params_; }

 private:
  SystemParams params_;
  std::vector<double> k1x_, k2x_, k3x_, k4x_, tmpx_;
  std::vector<double> k1y_, k2y_, k3y_, k4y_, tmpy_;
};

/// Classical RK4 step for a generic vector field f(t, x) -> dx/dt, using the same
/// stage arithmetic as Integrator.
template <class Field>
std::vector<double> rk4_step(Field&& f, const std::vector<double>& x, double t, double dt) {
  const std::size_t n = x.size();
  std::vector<double> tmp(n);
  const std::vector<double> k1 = f(t, x);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  const std::vector<double> k2 = f(t + 0.5 * dt, tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  const std::vector<double> k3 = f(t + 0.5 * dt, tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  const std::vector<double> k4 = f(t + dt, tmp);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

/// Single-scale Lorenz-96 slow tendency with constant forcing (reference form).
std::vector<double> lorenz96_tendency(std::span<const double> X, double forcing);

}  // namespace lrd::dynsys
