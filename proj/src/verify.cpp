#include "lrd/verify.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "lrd/rng.hpp"

namespace lrd::verify {

double crps_ensemble(std::span<const double> members, double obs, bool fair) {
  const std::size_t E = members.size();
  if (E == 0) throw std::invalid_argument("crps_ensemble: empty ensemble");
  if (fair && E < 2) throw std::invalid_argument("crps_ensemble: fair estimator needs E >= 2");
  std::vector<double> x(members.begin(), members.end());
  std::sort(x.begin(), x.end());
  double abs_err = 0.0;
  double pair = 0.0;  // sum_{i<j} (x_(j) - x_(i))
  for (std::size_t i = 0; i < E; ++i) {
    abs_err += std::abs(x[i] - obs);
    pair += (2.0 * static_cast<double>(i) - static_cast<double>(E) + 1.0) * x[i];
  }
  const double e = static_cast<double>(E);
  // sum_ij |x_i - x_j| = 2 * pair
  const double spread_term = fair ? pair / (e * (e - 1.0)) : pair / (e * e);
  const double crps = abs_err / e - spread_term;
  return fair ? crps : std::max(0.0, crps);
}

void EnsembleSet::validate() const {
  if (cases == 0 || members == 0 || K == 0) throw std::invalid_argument("EnsembleSet: empty dimension");
  if (values.size() != cases * members * K || truth.size() != cases * K) {
    throw std::invalid_argument("EnsembleSet: size mismatch");
  }
}

std::vector<double> crps_field(const EnsembleSet& set, bool fair) {
  set.validate();
  std::vector<double> out(set.cases * set.K);
  std::vector<double> col(set.members);
  for (std::size_t c = 0; c < set.cases; ++c) {
    for (std::size_t k = 0; k < set.K; ++k) {
      for (std::size_t e = 0; e < set.members; ++e) col[e] = set.member(c, e)[k];
      out[c * set.K + k] = crps_ensemble(col, set.observed(c)[k], fair);
    }
  }
  return out;
}

std::vector<double> ensemble_mean(const EnsembleSet& set) {
  set.validate();
  std::vector<double> out(set.cases * set.K, 0.0);
  for (std::size_t c = 0; c < set.cases; ++c) {
    double* row = out.data() + c * set.K;
    for (std::size_t e = 0; e < set.members; ++e) {
      const auto m = set.member(c, e);
      for (std::size_t k = 0; k < set.K; ++k) row[k] += m[k];
    }
    for (std::size_t k = 0; k < set.K; ++k) row[k] /= static_cast<double>(set.members);
  }
  return out;
}

std::vector<double> ensemble_mean_rmse_map(const EnsembleSet& set) {
  const auto mean = ensemble_mean(set);
  std::vector<double> out(set.K, 0.0);
  for (std::size_t c = 0; c < set.cases; ++c) {
    for (std::size_t k = 0; k < set.K; ++k) {
      const double e = mean[c * set.K + k] - set.truth[c * set.K + k];
      out[k] += e * e;
    }
  }
  for (double& v : out) v = std::sqrt(v / static_cast<double>(set.cases));
  return out;
}

double ensemble_mean_rmse(const EnsembleSet& set) {
  const auto mean = ensemble_mean(set);
  double se = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double e = mean[i] - set.truth[i];
    se += e * e;
  }
  return std::sqrt(se / static_cast<double>(mean.size()));
}

double ensemble_spread(const EnsembleSet& set) {
  if (set.members < 2) throw std::invalid_argument("ensemble_spread: needs at least 2 members");
  const auto mean = ensemble_mean(set);
  double var = 0.0;
  for (std::size_t c = 0; c < set.cases; ++c) {
    for (std::size_t e = 0; e < set.members; ++e) {
      const auto m = set.member(c, e);
      for (std::size_t k = 0; k < set.K; ++k) {
        const double d = m[k] - mean[c * set.K + k];
        var += d * d;
      }
    }
  }
  var /= static_cast<double>(set.members - 1);
  return std::sqrt(var / static_cast<double>(set.cases * set.K));
}

double spread_skill_ratio(const EnsembleSet& set) {
  const double e = static_cast<double>(set.members);
  return std::sqrt((e + 1.0) / e) * ensemble_spread(set) / ensemble_mean_rmse(set);
}

std::vector<double> paired_t_pvalues(std::span<const double> a, std::span<const double> b, std::size_t cases,
                                     std::size_t K) {
  if (cases < 3) throw std::invalid_argument("paired_t_pvalues: needs at least 3 cases");
  if (a.size() != cases * K || b.size() != cases * K) throw std::invalid_argument("paired_t_pvalues: size mismatch");
  const double n = static_cast<double>(cases);
  const boost::math::students_t dist(n - 1.0);
  std::vector<double> p(K);
  for (std::size_t k = 0; k < K; ++k) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cases; ++c) mean += a[c * K + k] - b[c * K + k];
    mean /= n;
    double ss = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
      const double d = a[c * K + k] - b[c * K + k] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) {
      p[k] = mean == 0.0 ? 1.0 : 0.0;
      continue;
    }
    const double t = mean / (sd / std::sqrt(n));
    p[k] = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return p;
}

std::vector<bool> benjamini_hochberg(std::span<const double> pvalues, double alpha) {
  const std::size_t m = pvalues.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pvalues[i] < pvalues[j]; });
  std::size_t kstar = 0;
  for (std::size_t r = 1; r <= m; ++r) {
    if (pvalues[order[r - 1]] <= static_cast<double>(r) * alpha / static_cast<double>(m)) kstar = r;
  }
  std::vector<bool> reject(m, false);
  for (std::size_t r = 0; r < kstar; ++r) reject[order[r]] = true;
  return reject;
}

double SignificanceMap::fraction() const {
  if (significant.empty()) return 0.0;
  return static_cast<double>(std::count(significant.begin(), significant.end(), true)) /
         static_cast<double>(significant.size());
}

SignificanceMap significance_map(std::span<const double> a, std::span<const double> b, std::size_t cases,
                                 std::size_t K, double alpha) {
  SignificanceMap m;
  m.pvalues = paired_t_pvalues(a, b, cases, K);
  m.significant = benjamini_hochberg(m.pvalues, alpha);
  return m;
}

double quantile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile_linear: empty input");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::pair<double, double> bootstrap_ci(std::span<const double> series, std::uint64_t seed, int n_boot,
                                       double level) {
  const std::size_t n = series.size();
  if (n < 10) throw std::invalid_argument("bootstrap_ci: needs at least 10 values, got " + std::to_string(n));
  if (n_boot < 1 || !(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: bad settings");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> means(static_cast<std::size_t>(n_boot));
  for (double& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += series[pick(rng)];
    m = s / static_cast<double>(n);
  }
  const double tail = (1.0 - level) / 2.0;
  std::sort(means.begin(), means.end());
  return {quantile_linear(means, tail), quantile_linear(means, 1.0 - tail)};
}

PercentChange percent_change(std::span<const double> model, std::span<const double> baseline) {
  if (model.size() != baseline.size() || model.empty()) throw std::invalid_argument("percent_change: size mismatch");
  PercentChange pc;
  pc.per_case.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (baseline[i] == 0.0) throw std::invalid_argument("percent_change: zero baseline score");
    pc.per_case[i] = 100.0 * (model[i] - baseline[i]) / baseline[i];
  }
  pc.mean = std::accumulate(pc.per_case.begin(), pc.per_case.end(), 0.0) / static_cast<double>(model.size());
  return pc;
}

std::vector<double> global_mean_series(std::span<const double> field, std::size_t cases, std::size_t K) {
  if (field.size() != cases * K) throw std::invalid_argument("global_mean_series: size mismatch");
  std::vector<double> out(cases);
  for (std::size_t c = 0; c < cases; ++c) {
    out[c] = std::accumulate(field.begin() + c * K, field.begin() + (c + 1) * K, 0.0) / static_cast<double>(K);
  }
  return out;
}

std::vector<double> time_mean_map(std::span<const double> field, std::size_t cases, std::size_t K) {
  if (field.size() != cases * K) throw std::invalid_argument("time_mean_map: size mismatch");
  std::vector<double> out(K, 0.0);
  for (std::size_t c = 0; c < cases; ++c) {
    for (std::size_t k = 0; k < K; ++k) out[k] += field[c * K + k];
  }
  for (double& v : out) v /= static_cast<double>(cases);
  return out;
}

void ReforecastArchive::add(int year, int day_of_year, std::span<const double> forecast_mean,
                            std::span<const double> truth) {
  if (forecast_mean.size() != K_ || truth.size() != K_) throw std::invalid_argument("ReforecastArchive: size mismatch");
  std::vector<double> err(K_);
  for (std::size_t k = 0; k < K_; ++k) err[k] = forecast_mean[k] - truth[k];
  error_[{day_of_year, year}] = std::move(err);
}

std::vector<double> ReforecastArchive::bias(int target_year, int day_of_year, std::size_t window_years) const {
  std::vector<double> out(K_, 0.0);
  std::size_t used = 0;
  auto it = error_.lower_bound({day_of_year, target_year});
  while (used < window_years && it != error_.begin()) {
    --it;
    if (it->first.first != day_of_year) break;
    for (std::size_t k = 0; k < K_; ++k) out[k] += it->second[k];
    ++used;
  }
  if (used < window_years) {
    throw std::invalid_argument("bias_correct: only " + std::to_string(used) + " reforecast years before year " +
                                std::to_string(target_year) + " at day " + std::to_string(day_of_year) + ", need " +
                                std::to_string(window_years));
  }
  for (double& v : out) v /= static_cast<double>(window_years);
  return out;
}

std::vector<double> bias_correct(std::span<const double> members, std::size_t K, int target_year, int day_of_year,
                                 const ReforecastArchive& archive, std::size_t window_years) {
  if (K != archive.K() || K == 0 || members.size() % K != 0) throw std::invalid_argument("bias_correct: size mismatch");
  const auto b = archive.bias(target_year, day_of_year, window_years);
  std::vector<double> out(members.begin(), members.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i % K];
  return out;
}

}  // namespace lrd::verify
