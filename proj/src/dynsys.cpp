#include "lrd/dynsys.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lrd/error.hpp"

namespace lrd::dynsys {

void SystemParams::validate() const {
  if (K < 4) throw std::invalid_argument("SystemParams: K must be >= 4");
  if (J < 1) throw std::invalid_argument("SystemParams: J must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("SystemParams: dt must be positive");
  if (!(T_seas > 0.0)) throw std::invalid_argument("SystemParams: T_seas must be positive");
  const double ratio = step_equiv / dt;
  if (!(ratio >= 1.0) || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw std::invalid_argument("SystemParams: step_equiv must be an integer multiple of dt");
  }
}

int SystemParams::substeps() const { return static_cast<int>(std::lround(step_equiv / dt)); }

double seasonal_forcing(double t, const SystemParams& params) {
  return params.F0 + params.A_seas * std::sin(2.0 * std::numbers::pi * t / params.T_seas);
}

void tendency_into(std::span<const double> X, std::span<const double> Y, double t,
                   const SystemParams& p, std::span<double> dX, std::span<double> dY) {
  const int K = p.K;
  const int KJ = p.K * p.J;
  const double forcing = seasonal_forcing(t, p);
  const double coupling = p.h * p.c / p.b;

  for (int k = 0; k < K; ++k) {
    const double xm1 = X[(k + K - 1) % K];
    const double xm2 = X[(k + K - 2) % K];
    const double xp1 = X[(k + 1) % K];
    double ysum = 0.0;
    for (int j = 0; j < p.J; ++j) ysum += Y[k * p.J + j];
    dX[k] = xm1 * (xp1 - xm2) - X[k] + forcing - coupling * ysum;
  }
  const double cb = p.c * p.b;
  for (int i = 0; i < KJ; ++i) {
    const double yp1 = Y[(i + 1) % KJ];
    const double yp2 = Y[(i + 2) % KJ];
    const double ym1 = Y[(i + KJ - 1) % KJ];
    dY[i] = -cb * yp1 * (yp2 - ym1) - p.c * Y[i] + coupling * X[i / p.J];
  }
}

StateDerivative tendency(const SystemState& state, const SystemParams& params) {
  if (state.X.size() != static_cast<std::size_t>(params.K) ||
      state.Y.size() != static_cast<std::size_t>(params.K * params.J)) {
    throw std::invalid_argument("tendency: state shape does not match params");
  }
  for (std::size_t i = 0; i < state.X.size(); ++i) {
    if (!std::isfinite(state.X[i])) throw std::domain_error("tendency: non-finite X[" + std::to_string(i) + "]");
  }
  for (std::size_t i = 0; i < state.Y.size(); ++i) {
    if (!std::isfinite(state.Y[i])) throw std::domain_error("tendency: non-finite Y[" + std::to_string(i) + "]");
  }
  StateDerivative d{std::vector<double>(state.X.size()), std::vector<double>(state.Y.size())};
  tendency_into(state.X, state.Y, state.t, params, d.dX, d.dY);
  return d;
}

std::vector<double> lorenz96_tendency(std::span<const double> X, double forcing) {
  const std::size_t K = X.size();
  std::vector<double> d(K);
  for (std::size_t k = 0; k < K; ++k) {
    d[k] = X[(k + K - 1) % K] * (X[(k + 1) % K] - X[(k + K - 2) % K]) - X[k] + forcing;
  }
  return d;
}

Integrator::Integrator(const SystemParams& params) : params_(params) {
  params_.validate();
  const std::size_t nx = params_.K;
  const std::size_t ny = static_cast<std::size_t>(params_.K) * params_.J;
  for (auto* v : {&k1x_, &k2x_, &k3x_, &k4x_, &tmpx_}) v->assign(nx, 0.0);
  for (auto* v : {&k1y_, &k2y_, &k3y_, &k4y_, &tmpy_}) v->assign(ny, 0.0);
}

void Integrator::step(SystemState& s) {
  const double dt = params_.dt;
  if (dt == 0.0) return;
  const std::size_t nx = s.X.size();
  const std::size_t ny = s.Y.size();
  if (nx != k1x_.size() || ny != k1y_.size()) {
    throw std::invalid_argument("Integrator::step: state shape does not match params");
  }

  tendency_into(s.X, s.Y, s.t, params_, k1x_, k1y_);
  for (std::size_t i = 0; i < nx; ++i) tmpx_[i] = s.X[i] + 0.5 * dt * k1x_[i];
  for (std::size_t i = 0; i < ny; ++i) tmpy_[i] = s.Y[i] + 0.5 * dt * k1y_[i];
  tendency_into(tmpx_, tmpy_, s.t + 0.5 * dt, params_, k2x_, k2y_);
  for (std::size_t i = 0; i < nx; ++i) tmpx_[i] = s.X[i] + 0.5 * dt * k2x_[i];
  for (std::size_t i = 0; i < ny; ++i) tmpy_[i] = s.Y[i] + 0.5 * dt * k2y_[i];
  tendency_into(tmpx_, tmpy_, s.t + 0.5 * dt, params_, k3x_, k3y_);
  for (std::size_t i = 0; i < nx; ++i) tmpx_[i] = s.X[i] + dt * k3x_[i];
  for (std::size_t i = 0; i < ny; ++i) tmpy_[i] = s.Y[i] + dt * k3y_[i];
  tendency_into(tmpx_, tmpy_, s.t + dt, params_, k4x_, k4y_);

  bool finite = true;
  for (std::size_t i = 0; i < nx; ++i) {
    s.X[i] += dt / 6.0 * (k1x_[i] + 2.0 * k2x_[i] + 2.0 * k3x_[i] + k4x_[i]);
    finite = finite && std::isfinite(s.X[i]);
  }
  for (std::size_t i = 0; i < ny; ++i) {
    s.Y[i] += dt / 6.0 * (k1y_[i] + 2.0 * k2y_[i] + 2.0 * k3y_[i] + k4y_[i]);
    finite = finite && std::isfinite(s.Y[i]);
  }
  s.t += dt;
  if (!finite) {
    throw InstabilityError(s.t, "teacher integration went non-finite at t=" + std::to_string(s.t));
  }
}

void Integrator::teacher_step(SystemState& s) {
  const int n = params_.substeps();
  for (int i = 0; i < n; ++i) step(s);
}

SystemState step_rk4(const SystemState& state, const SystemParams& params) {
  if (params.dt == 0.0) return state;
  Integrator integ(params);
  SystemState next = state;
  integ.step(next);
  return next;
}

SystemState advance_teacher_step(const SystemState& state, const SystemParams& params) {
  Integrator integ(params);
  SystemState next = state;
  integ.teacher_step(next);
  return next;
}

}  // namespace lrd::dynsys
