#pragma once

// Ensemble verification: CRPS, ensemble-mean RMSE, spread and spread-skill,
// paired significance with false-discovery control, bootstrap intervals,
// percent change against a baseline and reforecast bias correction.

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace lrd::verify {

/// CRPS of an ensemble against a scalar observation:
///   (1/E) sum|x_i - y| - 1/(2E^2) sum_ij |x_i - x_j|
/// With fair = true the pairwise term uses 1/(2E(E-1)) (E >= 2).
/// Throws std::invalid_argument on an empty ensemble.
double crps_ensemble(std::span<const double> members, double obs, bool fair = false);

/// Forecast cases: values [cases x members x K], truth [cases x K].
struct EnsembleSet {
  std::size_t cases = 0;
  std::size_t members = 0;
  std::size_t K = 0;
  std::vector<double> values;
  std::vector<double> truth;

  EnsembleSet() = default;
  EnsembleSet(std::size_t c, std::size_t e, std::size_t k)
      : cases(c), members(e), K(k), values(c * e * k, 0.0), truth(c * k, 0.0) {}

  std::span<double> member(std::size_t c, std::size_t e) { return {values.data() + (c * members + e) * K, K}; }
  std::span<const double> member(std::size_t c, std::size_t e) const {
    return {values.data() + (c * members + e) * K, K};
  }
  std::span<double> observed(std::size_t c) { return {truth.data() + c * K, K}; }
  std::span<const double> observed(std::size_t c) const { return {truth.data() + c * K, K}; }
  void validate() const;
};

/// Per-case, per-gridpoint CRPS, [cases x K].
std::vector<double> crps_field(const EnsembleSet& set, bool fair = false);

/// Ensemble mean per case, [cases x K].
std::vector<double> ensemble_mean(const EnsembleSet& set);

/// sqrt of the case- and gridpoint-mean squared error of the ensemble mean.
double ensemble_mean_rmse(const EnsembleSet& set);
/// Per-gridpoint version, [K].
std::vector<double> ensemble_mean_rmse_map(const EnsembleSet& set);

/// sqrt of the case- and gridpoint-mean unbiased member variance.
/// Throws std::invalid_argument when members < 2.
double ensemble_spread(const EnsembleSet& set);

/// sqrt((E+1)/E) * spread / RMSE.
double spread_skill_ratio(const EnsembleSet& set);

/// Two-sided paired t-test p-value per gridpoint on a - b, both [cases x K].
/// A zero-variance difference gives p = 1 when its mean is zero and p = 0
/// otherwise. Throws std::invalid_argument for fewer than 3 cases.
std::vector<double> paired_t_pvalues(std::span<const double> a, std::span<const double> b, std::size_t cases,
                                     std::size_t K);

/// Benjamini-Hochberg rejections at false discovery rate alpha.
std::vector<bool> benjamini_hochberg(std::span<const double> pvalues, double alpha = 0.05);

struct SignificanceMap {
  std::vector<double> pvalues;
  std::vector<bool> significant;
  double fraction() const;
};

SignificanceMap significance_map(std::span<const double> a, std::span<const double> b, std::size_t cases,
                                 std::size_t K, double alpha = 0.05);

/// Linear interpolation between order statistics (h = (n-1)p).
double quantile_linear(std::vector<double> values, double p);

/// Percentile bootstrap interval of the mean. Throws std::invalid_argument
/// for fewer than 10 values.
std::pair<double, double> bootstrap_ci(std::span<const double> series, std::uint64_t seed, int n_boot = 1000,
                                       double level = 0.95);

struct PercentChange {
  std::vector<double> per_case;  // 100 * (model - baseline) / baseline
  double mean = 0.0;
};

PercentChange percent_change(std::span<const double> model, std::span<const double> baseline);

/// Mean over gridpoints of each row of a [cases x K] field.
std::vector<double> global_mean_series(std::span<const double> field, std::size_t cases, std::size_t K);
/// Mean over cases of a [cases x K] field, [K].
std::vector<double> time_mean_map(std::span<const double> field, std::size_t cases, std::size_t K);

/// Past forecasts and the verifying truth for one lead, keyed by (year, day-of-year).
class ReforecastArchive {
 public:
  explicit ReforecastArchive(std::size_t K = 0) : K_(K) {}
  void add(int year, int day_of_year, std::span<const double> forecast_mean, std::span<const double> truth);
  /// Mean (forecast - truth) over the `window_years` most recent years before
  /// target_year at this day-of-year. Throws std::invalid_argument when fewer
  /// are available.
  std::vector<double> bias(int target_year, int day_of_year, std::size_t window_years = 20) const;
  std::size_t K() const noexcept { return K_; }

 private:
  std::size_t K_;
  std::map<std::pair<int, int>, std::vector<double>> error_;  // (doy, year) -> forecast - truth
};

/// Subtracts the reforecast bias from every member ([members x K]) of a
/// forecast issued in target_year at day_of_year.
std::vector<double> bias_correct(std::span<const double> members, std::size_t K, int target_year, int day_of_year,
                                 const ReforecastArchive& archive, std::size_t window_years = 20);

}  // namespace lrd::verify
