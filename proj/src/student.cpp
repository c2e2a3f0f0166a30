#include "lrd/student.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lrd::student {

void SigmaSpec::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
    throw std::invalid_argument("SigmaSpec: need 0 < sigma_min < sigma_max");
  }
  if (!(sigma_data > 0.0)) throw std::invalid_argument("SigmaSpec: sigma_data must be positive");
}

Preconditioning precondition(double sigma, const SigmaSpec& spec) {
  if (!(sigma > 0.0)) throw std::invalid_argument("precondition: sigma must be positive");
  const double sd = spec.sigma_data;
  const double s2 = sigma * sigma + sd * sd;
  return {sd * sd / s2, sigma * sd / std::sqrt(s2), 1.0 / std::sqrt(s2), std::log(sigma) / 4.0};
}

double loss_weight(double sigma, const SigmaSpec& spec) {
  const double sd = spec.sigma_data;
  return (sigma * sigma + sd * sd) / ((sigma * sd) * (sigma * sd));
}

double sigma_from_unit(double u, const SigmaSpec& spec) {
  const double lo = std::log(spec.sigma_min);
  const double hi = std::log(spec.sigma_max);
  return std::exp(lo + u * (hi - lo));
}

double sample_sigma(Rng& rng, const SigmaSpec& spec) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return sigma_from_unit(unit(rng), spec);
}

net::ArchSpec denoiser_arch(int width, int depth, int kernel) {
  return {width, depth, kernel, 1 + targets::kHistoryFrames, 1, 5};
}

namespace {

constexpr std::size_t kHist = targets::kHistoryFrames;

void fill_features(double c_noise, const double* phase, double* out) {
  out[0] = c_noise;
  out[1] = std::sin(std::numbers::pi * c_noise);
  out[2] = std::cos(std::numbers::pi * c_noise);
  out[3] = phase[0];
  out[4] = phase[1];
}

}  // namespace

std::vector<double> denoise(const net::NetParams& params, const SigmaSpec& spec, std::span<const double> x,
                            std::span<const double> sigma, std::span<const double> conditioning,
                            std::span<const double> phase, std::span<const std::uint8_t> dropped, std::size_t K,
                            net::ForwardCache* cache) {
  const std::size_t B = sigma.size();
  if (x.size() != B * K || conditioning.size() != B * kHist * K || phase.size() != 2 * B ||
      (!dropped.empty() && dropped.size() != B)) {
    throw std::invalid_argument("denoise: shape mismatch");
  }
  const std::size_t Ci = 1 + kHist;
  std::vector<double> input(B * Ci * K, 0.0);
  std::vector<double> features(B * 5);
  std::vector<Preconditioning> pc(B);
  for (std::size_t b = 0; b < B; ++b) {
    pc[b] = precondition(sigma[b], spec);
    double* row = input.data() + b * Ci * K;
    for (std::size_t k = 0; k < K; ++k) row[k] = pc[b].c_in * x[b * K + k];
    if (dropped.empty() || dropped[b] == 0) {
      std::copy_n(conditioning.data() + b * kHist * K, kHist * K, row + K);
    }
    fill_features(pc[b].c_noise, phase.data() + 2 * b, features.data() + 5 * b);
  }
  const net::Backbone backbone(params.arch);
  std::vector<double> out = backbone.forward(params, input, features, B, K, cache);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      out[b * K + k] = pc[b].c_skip * x[b * K + k] + pc[b].c_out * out[b * K + k];
    }
  }
  return out;
}

std::vector<double> forward(const net::NetParams& params, const SigmaSpec& spec, std::span<const double> x_noised,
                            double sigma, std::span<const double> conditioning, std::array<double, 2> phase,
                            bool cond_dropped) {
  const std::uint8_t drop = cond_dropped ? 1 : 0;
  const double s[1] = {sigma};
  return denoise(params, spec, x_noised, s, conditioning, phase, std::span<const std::uint8_t>(&drop, 1),
                 x_noised.size());
}

std::vector<EdmDraw> draw_edm(Rng& rng, std::size_t batch, std::size_t K, const SigmaSpec& spec,
                              double dropout_prob) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<EdmDraw> draws(batch);
  for (auto& d : draws) {
    d.sigma = sample_sigma(rng, spec);
    d.unit_noise.resize(K);
    for (double& z : d.unit_noise) z = normal(rng);
    d.dropped = unit(rng) < dropout_prob;
  }
  return draws;
}

LossResult edm_loss(const net::NetParams& params, const SigmaSpec& spec, const Batch& batch,
                    std::span<const EdmDraw> draws, bool want_grads) {
  const std::size_t B = batch.size;
  const std::size_t K = batch.K;
  if (B == 0) throw std::invalid_argument("edm_loss: empty batch");
  if (draws.size() != B) throw std::invalid_argument("edm_loss: one draw per sample required");
  std::vector<double> x(B * K), sigma(B);
  std::vector<std::uint8_t> dropped(B);
  for (std::size_t b = 0; b < B; ++b) {
    sigma[b] = draws[b].sigma;
    dropped[b] = draws[b].dropped ? 1 : 0;
    for (std::size_t k = 0; k < K; ++k) {
      x[b * K + k] = batch.target[b * K + k] + draws[b].sigma * draws[b].unit_noise[k];
    }
  }
  net::ForwardCache cache;
  const auto D = denoise(params, spec, x, sigma, batch.conditioning, batch.phase, dropped, K,
                         want_grads ? &cache : nullptr);

  LossResult res;
  res.per_sample.resize(B);
  std::vector<double> dF(want_grads ? B * K : 0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double lambda = loss_weight(sigma[b], spec);
    double se = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = D[b * K + k] - batch.target[b * K + k];
      se += e * e;
    }
    res.per_sample[b] = lambda * se / static_cast<double>(K);
    if (!std::isfinite(res.per_sample[b])) {
      throw NumericError("edm_loss: non-finite loss at sample " + std::to_string(b));
    }
    total += res.per_sample[b];
    if (want_grads) {
      const double c_out = precondition(sigma[b], spec).c_out;
      const double scale = 2.0 * lambda / static_cast<double>(K * B);
      for (std::size_t k = 0; k < K; ++k) {
        dF[b * K + k] = c_out * scale * (D[b * K + k] - batch.target[b * K + k]);
      }
    }
  }
  res.loss = total / static_cast<double>(B);
  if (want_grads) {
    res.grads = net::Gradients::zeros_like(params);
    net::Backbone(params.arch).backward(params, cache, dF, res.grads);
  }
  return res;
}

LossResult edm_loss(const net::NetParams& params, const SigmaSpec& spec, const Batch& batch, Rng& rng,
                    double dropout_prob) {
  const auto draws = draw_edm(rng, batch.size, batch.K, spec, dropout_prob);
  return edm_loss(params, spec, batch, draws, true);
}

AdamState AdamState::zeros_like(const net::NetParams& p) {
  AdamState s;
  for (const auto& a : p.arrays) {
    s.m.emplace_back(a.value.size(), 0.0);
    s.v.emplace_back(a.value.size(), 0.0);
  }
  return s;
}

void adam_step(net::NetParams& params, const net::Gradients& grads, AdamState& state, double lr,
               const std::vector<bool>& trainable, const AdamConfig& cfg) {
  if (grads.arrays.size() != params.arrays.size() || state.m.size() != params.arrays.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.arrays.size(); ++i) {
    if (!trainable.empty() && !trainable[i]) continue;
    auto& w = params.arrays[i].value;
    const auto& g = grads.arrays[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != w.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

std::vector<bool> finetune_mask(const net::NetParams& params) {
  std::vector<bool> mask(params.arrays.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto g = params.arrays[i].group;
    mask[i] = g == net::ParamGroup::kInput || g == net::ParamGroup::kOutput || g == net::ParamGroup::kNorm;
  }
  return mask;
}

SampleSource::SampleSource(std::span<const datagen::Trajectory> trajs, const targets::LeadSpec& lead,
                           int save_window, const targets::Normalizer& norm, std::size_t frame_budget,
                           std::size_t stride)
    : lead_(lead), save_window_(save_window), norm_(norm) {
  const auto horizon = static_cast<std::size_t>(lead.horizon_frames(save_window));
  std::size_t remaining = frame_budget == 0 ? static_cast<std::size_t>(-1) : frame_budget;
  for (const auto& t : trajs) {
    if (remaining == 0) break;
    const std::size_t usable = std::min(t.stable_up_to, remaining);
    remaining -= usable;
    frames_used_ += usable;
    for (std::size_t n0 = targets::kHistoryFrames - 1; n0 + horizon < usable; n0 += stride) {
      index_.push_back({&t, n0});
    }
  }
  if (frame_budget != 0 && frames_used_ < frame_budget) {
    throw std::invalid_argument("SampleSource: corpus has " + std::to_string(frames_used_) +
                                " frames, fewer than the requested " + std::to_string(frame_budget));
  }
}

targets::TrainingSample SampleSource::sample(std::size_t row) const {
  const auto& e = index_.at(row);
  return targets::build_sample(*e.traj, e.n0, lead_, save_window_);
}

Batch SampleSource::make_batch(std::span<const std::size_t> rows) const {
  if (index_.empty()) throw std::invalid_argument("SampleSource: empty");
  Batch batch;
  batch.size = rows.size();
  batch.K = index_.front().traj->K;
  const std::size_t K = batch.K;
  batch.conditioning.resize(batch.size * kHist * K);
  batch.phase.resize(2 * batch.size);
  batch.target.resize(batch.size * K);
  batch.day_of_year.resize(batch.size);
  const auto [first, last] = lead_.frame_offsets(save_window_);
  const double inv_n = 1.0 / static_cast<double>(last - first + 1);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& e = index_.at(rows[b]);
    const auto& t = *e.traj;
    for (std::size_t h = 0; h < kHist; ++h) {
      const auto f = t.frame(e.n0 - h);
      for (std::size_t k = 0; k < K; ++k) batch.conditioning[(b * kHist + h) * K + k] = norm_.apply(f[k]);
    }
    double* tgt = batch.target.data() + b * K;
    std::fill(tgt, tgt + K, 0.0);
    for (int d = first; d <= last; ++d) {
      const auto f = t.frame(e.n0 + static_cast<std::size_t>(d));
      for (std::size_t k = 0; k < K; ++k) tgt[k] += static_cast<double>(f[k]);
    }
    for (std::size_t k = 0; k < K; ++k) tgt[k] = norm_.apply(tgt[k] * inv_n);
    const int doy = t.day_of_year(e.n0);
    const auto ph = targets::seasonal_phase(doy);
    batch.phase[2 * b] = ph[0];
    batch.phase[2 * b + 1] = ph[1];
    batch.day_of_year[b] = doy;
  }
  return batch;
}

EvalSet make_eval_set(const SampleSource& source, std::size_t n, const SigmaSpec& spec, std::uint64_t seed) {
  if (source.size() == 0) throw std::invalid_argument("make_eval_set: empty source");
  Rng rng(seed);
  std::vector<std::size_t> rows(source.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(std::min(n, rows.size()));
  EvalSet set;
  set.batch = source.make_batch(rows);
  // Noise levels and vectors depend only on the seed and position, so two
  // sources evaluated with the same seed share them exactly.
  Rng noise_rng(child_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  set.draws.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& d = set.draws[i];
    d.sigma = sigma_from_unit((static_cast<double>(i) + 0.5) / static_cast<double>(rows.size()), spec);
    d.unit_noise.resize(set.batch.K);
    for (double& z : d.unit_noise) z = normal(noise_rng);
  }
  return set;
}

std::vector<double> eval_losses(const net::NetParams& params, const SigmaSpec& spec, const EvalSet& set) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(set.batch.size);
  const std::size_t K = set.batch.K;
  for (std::size_t start = 0; start < set.batch.size; start += kChunk) {
    const std::size_t n = std::min(kChunk, set.batch.size - start);
    Batch sub;
    sub.size = n;
    sub.K = K;
    sub.conditioning.assign(set.batch.conditioning.begin() + start * kHist * K,
                            set.batch.conditioning.begin() + (start + n) * kHist * K);
    sub.phase.assign(set.batch.phase.begin() + 2 * start, set.batch.phase.begin() + 2 * (start + n));
    sub.target.assign(set.batch.target.begin() + start * K, set.batch.target.begin() + (start + n) * K);
    const auto r = edm_loss(params, spec, sub, std::span(set.draws).subspan(start, n), false);
    out.insert(out.end(), r.per_sample.begin(), r.per_sample.end());
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TrainResult train(const SampleSource& train_src, const SampleSource& val_src, const SigmaSpec& spec,
                  const net::ArchSpec& arch, const TrainConfig& config, const net::NetParams* init,
                  const ProgressFn& progress) {
  spec.validate();
  if (train_src.size() == 0 || val_src.size() == 0) throw std::invalid_argument("train: empty sample source");
  if (config.batch < 1 || config.steps < 0 || config.eval_every < 1) {
    throw std::invalid_argument("train: bad TrainConfig");
  }
  TrainResult res;
  net::NetParams params = init ? *init : net::init_params(arch, child_seed(config.seed, 1));
  AdamState opt = AdamState::zeros_like(params);
  Rng rng(child_seed(config.seed, 2));
  const std::uint64_t eval_seed = child_seed(config.seed, 3);
  const EvalSet train_eval = make_eval_set(train_src, config.eval_samples, spec, eval_seed);
  const EvalSet val_eval = make_eval_set(val_src, config.eval_samples, spec, eval_seed);

  auto evaluate = [&](int step) {
    const auto tl = eval_losses(params, spec, train_eval);
    auto vl = eval_losses(params, spec, val_eval);
    CurvePoint pt{step, mean_of(tl), mean_of(vl)};
    res.curve.push_back(pt);
    if (res.curve.size() == 1 || pt.val_loss < res.best_val) {
      res.best_val = pt.val_loss;
      res.best_step = step;
      res.best = params;
      res.best_val_per_sample = std::move(vl);
    }
    if (progress) progress(pt);
  };

  evaluate(0);
  std::uniform_int_distribution<std::size_t> pick(0, train_src.size() - 1);
  std::vector<std::size_t> rows(static_cast<std::size_t>(config.batch));
  for (int step = 1; step <= config.steps; ++step) {
    for (auto& r : rows) r = pick(rng);
    const Batch batch = train_src.make_batch(rows);
    LossResult lr;
    try {
      lr = edm_loss(params, spec, batch, rng, config.dropout);
    } catch (const NumericError& e) {
      throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step) + ": " + e.what(),
                             params, step - 1);
    }
    adam_step(params, lr.grads, opt, config.lr, config.trainable);
    if (step % config.eval_every == 0 || step == config.steps) evaluate(step);
  }
  res.last = std::move(params);
  res.optimizer = std::move(opt);
  return res;
}

TrainResult finetune(const net::NetParams& pretrained, const SampleSource& train_src, const SampleSource& val_src,
                     const SigmaSpec& spec, TrainConfig config, const ProgressFn& progress) {
  config.trainable = finetune_mask(pretrained);
  return train(train_src, val_src, spec, pretrained.arch, config, &pretrained, progress);
}

bool Checkpoint::operator==(const Checkpoint& o) const {
  return model_kind == o.model_kind && params == o.params && optimizer == o.optimizer && step == o.step &&
         sigma.sigma_min == o.sigma.sigma_min && sigma.sigma_max == o.sigma.sigma_max &&
         sigma.sigma_data == o.sigma.sigma_data && lead == o.lead && normalizer.mean == o.normalizer.mean &&
         normalizer.std == o.normalizer.std;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& is) {
  std::vector<double> v(get<std::uint64_t>(is));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  os.write("LRDK", 4);
  put(os, kCheckpointVersion);
  put_string(os, c.model_kind);
  const auto& a = c.params.arch;
  for (int v : {a.width, a.depth, a.kernel, a.in_channels, a.out_channels, a.emb_features}) put<std::int32_t>(os, v);
  put<std::int32_t>(os, c.lead.N);
  put<std::int32_t>(os, c.lead.M);
  put<std::int32_t>(os, static_cast<std::int32_t>(c.lead.label));
  put(os, c.sigma.sigma_min);
  put(os, c.sigma.sigma_max);
  put(os, c.sigma.sigma_data);
  put(os, c.normalizer.mean);
  put(os, c.normalizer.std);
  put<std::int64_t>(os, c.step);
  put<std::int64_t>(os, c.optimizer.step);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.params.arrays.size()));
  const bool has_opt = c.optimizer.m.size() == c.params.arrays.size();
  put<std::uint8_t>(os, has_opt ? 1 : 0);
  for (std::size_t i = 0; i < c.params.arrays.size(); ++i) {
    const auto& arr = c.params.arrays[i];
    put_string(os, arr.name);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(arr.group));
    put_doubles(os, arr.value);
    if (has_opt) {
      put_doubles(os, c.optimizer.m[i]);
      put_doubles(os, c.optimizer.v[i]);
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "LRDK", 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path.string());
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  Checkpoint c;
  c.model_kind = get_string(is);
  auto& a = c.params.arch;
  a.width = get<std::int32_t>(is);
  a.depth = get<std::int32_t>(is);
  a.kernel = get<std::int32_t>(is);
  a.in_channels = get<std::int32_t>(is);
  a.out_channels = get<std::int32_t>(is);
  a.emb_features = get<std::int32_t>(is);
  c.lead.N = get<std::int32_t>(is);
  c.lead.M = get<std::int32_t>(is);
  c.lead.label = static_cast<targets::LeadLabel>(get<std::int32_t>(is));
  c.sigma.sigma_min = get<double>(is);
  c.sigma.sigma_max = get<double>(is);
  c.sigma.sigma_data = get<double>(is);
  c.normalizer.mean = get<double>(is);
  c.normalizer.std = get<double>(is);
  c.step = get<std::int64_t>(is);
  c.optimizer.step = get<std::int64_t>(is);
  const auto n = get<std::uint32_t>(is);
  const bool has_opt = get<std::uint8_t>(is) != 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    net::ParamArray arr;
    arr.name = get_string(is);
    arr.group = static_cast<net::ParamGroup>(get<std::uint8_t>(is));
    arr.value = get_doubles(is);
    c.params.arrays.push_back(std::move(arr));
    if (has_opt) {
      c.optimizer.m.push_back(get_doubles(is));
      c.optimizer.v.push_back(get_doubles(is));
    }
  }
  return c;
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "step,train_loss,val_loss\n";
  for (const auto& p : curve) os << p.step << ',' << p.train_loss << ',' << p.val_loss << '\n';
}

}  // namespace lrd::student
