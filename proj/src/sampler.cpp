#include "lrd/sampler.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <stdexcept>
#include <string>

#include "lrd/error.hpp"
#include "lrd/verify.hpp"

namespace lrd::sampler {

void SamplerConfig::validate() const {
  if (num_steps < 1) throw std::invalid_argument("SamplerConfig: num_steps must be >= 1");
  if (ensemble_size < 1) throw std::invalid_argument("SamplerConfig: ensemble_size must be >= 1");
  if (!(guidance >= 0.0)) throw std::invalid_argument("SamplerConfig: guidance must be >= 0");
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw std::invalid_argument("SamplerConfig: bad sigma range");
  if (!(rho > 0.0)) throw std::invalid_argument("SamplerConfig: rho must be positive");
  if (s_churn != 0.0) throw std::invalid_argument("SamplerConfig: stochastic churn is not supported");
}

std::vector<double> sigma_schedule(const SamplerConfig& config) {
  config.validate();
  const int n = config.num_steps;
  std::vector<double> s(static_cast<std::size_t>(n) + 1, 0.0);
  s[0] = config.sigma_max;
  if (n > 1) {
    const double a = std::pow(config.sigma_max, 1.0 / config.rho);
    const double b = std::pow(config.sigma_min, 1.0 / config.rho);
    for (int i = 1; i < n - 1; ++i) {
      s[static_cast<std::size_t>(i)] = std::pow(a + static_cast<double>(i) / (n - 1) * (b - a), config.rho);
    }
    s[static_cast<std::size_t>(n - 1)] = config.sigma_min;
  }
  return s;
}

std::vector<double> StudentDenoiser::operator()(std::span<const double> x, double sigma,
                                                std::span<const double> conditioning, std::span<const double> phase,
                                                std::size_t B, std::size_t K, bool conditional) const {
  const std::vector<double> sig(B, sigma);
  const std::vector<std::uint8_t> dropped(B, conditional ? 0 : 1);
  return student::denoise(params_, spec_, x, sig, conditioning, phase, dropped, K);
}

std::vector<double> GaussianDenoiser::operator()(std::span<const double> x, double sigma, std::span<const double>,
                                                 std::span<const double>, std::size_t, std::size_t, bool) const {
  const double v = sd_ * sd_;
  const double s2 = sigma * sigma;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (v * x[i] + s2 * mu_) / (v + s2);
  return out;
}

std::vector<double> guided_denoise(const Denoiser& denoiser, std::span<const double> x, double sigma,
                                   std::span<const double> conditioning, std::span<const double> phase, std::size_t B,
                                   std::size_t K, double w) {
  if (!(sigma > 0.0)) throw std::invalid_argument("guided_denoise: sigma must be positive");
  if (w == 1.0) return denoiser(x, sigma, conditioning, phase, B, K, true);
  auto du = denoiser(x, sigma, conditioning, phase, B, K, false);
  if (w == 0.0) return du;
  const auto dc = denoiser(x, sigma, conditioning, phase, B, K, true);
  for (std::size_t i = 0; i < du.size(); ++i) du[i] = du[i] + w * (dc[i] - du[i]);
  return du;
}

namespace {

void check_finite(std::span<const double> x, int step) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("sampler: non-finite state at step " + std::to_string(step));
  }
}

}  // namespace

namespace {

std::vector<double> solve(const Denoiser& denoiser, std::vector<double> x, std::span<const double> conditioning,
                          std::span<const double> phase, std::size_t B, std::size_t K, const SamplerConfig& config,
                          const std::vector<double>& sigmas) {
  std::vector<double> d(B * K), x_next(B * K);
  for (std::size_t i = 0; i + 1 < sigmas.size(); ++i) {
    const double s = sigmas[i];
    const double s_next = sigmas[i + 1];
    const double h = s_next - s;
    const auto D = guided_denoise(denoiser, x, s, conditioning, phase, B, K, config.guidance);
    for (std::size_t j = 0; j < x.size(); ++j) {
      d[j] = (x[j] - D[j]) / s;
      x_next[j] = x[j] + h * d[j];
    }
    if (s_next > 0.0) {
      const auto D2 = guided_denoise(denoiser, x_next, s_next, conditioning, phase, B, K, config.guidance);
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d2 = (x_next[j] - D2[j]) / s_next;
        x_next[j] = x[j] + h * 0.5 * (d[j] + d2);
      }
    }
    x.swap(x_next);
    check_finite(x, static_cast<int>(i));
  }
  return x;
}

void draw_initial(Rng& rng, double sigma_max, std::span<double> x) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : x) v = sigma_max * normal(rng);
}

}  // namespace

std::vector<double> sample_batch(const Denoiser& denoiser, std::span<const double> conditioning,
                                 std::span<const double> phase, std::size_t K, const SamplerConfig& config,
                                 std::span<const std::uint64_t> seeds) {
  const auto sigmas = sigma_schedule(config);
  const std::size_t B = seeds.size();
  if (conditioning.size() != B * targets::kHistoryFrames * K || phase.size() != 2 * B) {
    throw std::invalid_argument("sample_batch: shape mismatch");
  }
  std::vector<double> x(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    Rng rng(seeds[b]);
    draw_initial(rng, sigmas[0], std::span(x).subspan(b * K, K));
  }
  return solve(denoiser, std::move(x), conditioning, phase, B, K, config, sigmas);
}

std::vector<double> heun_solve(const Denoiser& denoiser, std::span<const double> conditioning,
                               std::array<double, 2> phase, std::size_t K, const SamplerConfig& config, Rng& rng) {
  const auto sigmas = sigma_schedule(config);
  if (conditioning.size() != targets::kHistoryFrames * K) throw std::invalid_argument("heun_solve: shape mismatch");
  std::vector<double> x(K);
  draw_initial(rng, sigmas[0], x);
  return solve(denoiser, std::move(x), conditioning, phase, 1, K, config, sigmas);
}

EnsembleForecast generate_ensemble(const Denoiser& denoiser, std::span<const double> conditioning,
                                   std::array<double, 2> phase, std::size_t K, const SamplerConfig& config,
                                   std::uint64_t seed) {
  config.validate();
  const auto E = static_cast<std::size_t>(config.ensemble_size);
  const std::size_t cs = targets::kHistoryFrames * K;
  if (conditioning.size() != cs) throw std::invalid_argument("generate_ensemble: conditioning must be [4 x K]");
  std::vector<double> cond(E * cs), ph(2 * E);
  std::vector<std::uint64_t> seeds(E);
  for (std::size_t e = 0; e < E; ++e) {
    std::copy(conditioning.begin(), conditioning.end(), cond.begin() + static_cast<std::ptrdiff_t>(e * cs));
    ph[2 * e] = phase[0];
    ph[2 * e + 1] = phase[1];
    seeds[e] = child_seed(seed, e);
  }
  EnsembleForecast f;
  f.E = E;
  f.K = K;
  f.members = sample_batch(denoiser, cond, ph, K, config, seeds);
  f.guidance = config.guidance;
  f.seed = seed;
  return f;
}

std::vector<EnsembleForecast> forecast_cases(const Denoiser& denoiser, std::span<const ForecastCase> cases,
                                             const targets::Normalizer& norm, const SamplerConfig& config,
                                             targets::LeadLabel lead, std::uint64_t seed) {
  std::vector<EnsembleForecast> out;
  out.reserve(cases.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& fc = cases[c];
    const std::size_t K = fc.truth.size();
    auto f = generate_ensemble(denoiser, fc.conditioning, fc.phase, K, config, child_seed(seed, c));
    for (double& v : f.members) v = norm.invert(v);
    f.init_time = fc.init_time;
    f.lead = lead;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<SweepPoint> guidance_sweep(const Denoiser& denoiser, std::span<const ForecastCase> cases,
                                       const targets::Normalizer& norm, std::span<const double> weights,
                                       SamplerConfig config, std::uint64_t seed) {
  if (cases.empty()) throw std::invalid_argument("guidance_sweep: no cases");
  std::vector<SweepPoint> out;
  const std::size_t K = cases.front().truth.size();
  for (double w : weights) {
    config.guidance = w;
    const auto fcs = forecast_cases(denoiser, cases, norm, config, targets::LeadLabel::kMedium, seed);
    verify::EnsembleSet set(cases.size(), static_cast<std::size_t>(config.ensemble_size), K);
    for (std::size_t c = 0; c < cases.size(); ++c) {
      std::copy(fcs[c].members.begin(), fcs[c].members.end(),
                set.values.begin() + static_cast<std::ptrdiff_t>(c * set.members * K));
      std::copy(cases[c].truth.begin(), cases[c].truth.end(), set.observed(c).begin());
    }
    SweepPoint p;
    p.guidance = w;
    p.rmse = verify::ensemble_mean_rmse(set);
    if (set.members >= 2) {
      p.spread = verify::ensemble_spread(set);
      p.spread_skill = verify::spread_skill_ratio(set);
    }
    p.crps_per_case = verify::global_mean_series(verify::crps_field(set), set.cases, K);
    double sum = 0.0;
    for (double v : p.crps_per_case) sum += v;
    p.crps = sum / static_cast<double>(set.cases);
    out.push_back(std::move(p));
  }
  return out;
}

void write_forecast_archive(const std::filesystem::path& dir, std::span<const EnsembleForecast> forecasts) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "forecasts.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "forecasts.bin").string());
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& f : forecasts) {
    std::vector<float> block(f.members.begin(), f.members.end());
    bin.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(float)));
    index.push_back({{"offset", offset},
                     {"members", f.E},
                     {"K", f.K},
                     {"init_time", f.init_time},
                     {"lead", std::string(targets::to_string(f.lead))},
                     {"guidance", f.guidance},
                     {"seed", f.seed}});
    offset += block.size() * sizeof(float);
  }
  std::ofstream js(dir / "forecasts.json", std::ios::trunc);
  js << index.dump(2) << '\n';
  if (!bin || !js) throw std::runtime_error("forecast archive: write failed in " + dir.string());
}

std::vector<EnsembleForecast> read_forecast_archive(const std::filesystem::path& dir) {
  std::ifstream js(dir / "forecasts.json");
  std::ifstream bin(dir / "forecasts.bin", std::ios::binary);
  if (!js || !bin) throw MissingInputError("forecast archive in " + dir.string());
  const auto index = nlohmann::json::parse(js);
  std::vector<EnsembleForecast> out;
  for (const auto& e : index) {
    EnsembleForecast f;
    f.E = e.at("members").get<std::size_t>();
    f.K = e.at("K").get<std::size_t>();
    f.init_time = e.at("init_time").get<double>();
    f.lead = targets::parse_lead_label(e.at("lead").get<std::string>());
    f.guidance = e.at("guidance").get<double>();
    f.seed = e.at("seed").get<std::uint64_t>();
    std::vector<float> block(f.E * f.K);
    bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(float)));
    if (!bin) throw std::runtime_error("forecast archive: truncated forecasts.bin");
    f.members.assign(block.begin(), block.end());
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace lrd::sampler
