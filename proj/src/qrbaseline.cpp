#include "lrd/qrbaseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "lrd/error.hpp"
#include "lrd/verify.hpp"

namespace lrd::qr {

std::array<double, 4> quintile_edges(std::span<const double> values) {
  if (values.size() < 20) {
    throw std::invalid_argument("quintile_edges: need at least 20 reference values, got " +
                                std::to_string(values.size()));
  }
  const std::vector<double> v(values.begin(), values.end());
  std::array<double, 4> e{};
  for (int i = 0; i < 4; ++i) e[static_cast<std::size_t>(i)] = verify::quantile_linear(v, 0.2 * (i + 1));
  for (int i = 1; i < 4; ++i) {
    if (!(e[static_cast<std::size_t>(i)] > e[static_cast<std::size_t>(i - 1)])) {
      throw std::invalid_argument("quintile_edges: degenerate reference distribution");
    }
  }
  return e;
}

int quintile_bin(const std::array<double, 4>& edges, double value) {
  int b = 0;
  for (double e : edges) b += e < value ? 1 : 0;
  return b;
}

QuintileEdges fit_quintiles(const targets::Climatology& clim) {
  QuintileEdges q;
  q.K = clim.K;
  q.edges.resize(datagen::kDaysPerYear * clim.K);
  std::vector<double> col(clim.years);
  for (int d = 0; d < datagen::kDaysPerYear; ++d) {
    for (std::size_t k = 0; k < clim.K; ++k) {
      for (std::size_t y = 0; y < clim.years; ++y) col[y] = clim.member(d, y)[k];
      q.edges[static_cast<std::size_t>(d) * clim.K + k] = quintile_edges(col);
    }
  }
  return q;
}

void write_edges(const std::filesystem::path& path, const QuintileEdges& q) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("LRQE", 4);
  const auto K = static_cast<std::uint32_t>(q.K);
  os.write(reinterpret_cast<const char*>(&K), sizeof K);
  os.write(reinterpret_cast<const char*>(q.edges.data()),
           static_cast<std::streamsize>(q.edges.size() * sizeof(std::array<double, 4>)));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

QuintileEdges read_edges(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("quintile edges " + path.string());
  char magic[4];
  std::uint32_t K = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&K), sizeof K);
  if (!is || std::memcmp(magic, "LRQE", 4) != 0) throw std::runtime_error("bad quintile edge file " + path.string());
  QuintileEdges q;
  q.K = K;
  q.edges.resize(datagen::kDaysPerYear * K);
  is.read(reinterpret_cast<char*>(q.edges.data()),
          static_cast<std::streamsize>(q.edges.size() * sizeof(std::array<double, 4>)));
  if (!is) throw std::runtime_error("truncated quintile edge file " + path.string());
  return q;
}

net::ArchSpec qr_arch(int width, int depth, int kernel) {
  return {width, depth, kernel, targets::kHistoryFrames, static_cast<int>(kBins), 2};
}

namespace {

void softmax_inplace(std::vector<double>& logits, std::size_t B, std::size_t K) {
  for (std::size_t b = 0; b < B; ++b) {
    double* z = logits.data() + b * kBins * K;
    for (std::size_t k = 0; k < K; ++k) {
      double mx = z[k];
      for (std::size_t c = 1; c < kBins; ++c) mx = std::max(mx, z[c * K + k]);
      double s = 0.0;
      for (std::size_t c = 0; c < kBins; ++c) {
        z[c * K + k] = std::exp(z[c * K + k] - mx);
        s += z[c * K + k];
      }
      for (std::size_t c = 0; c < kBins; ++c) z[c * K + k] /= s;
    }
  }
}

}  // namespace

std::vector<double> qr_forward(const net::NetParams& params, std::span<const double> conditioning,
                               std::span<const double> phase, std::size_t B, std::size_t K, net::ForwardCache* cache) {
  if (conditioning.size() != B * targets::kHistoryFrames * K || phase.size() != 2 * B) {
    throw std::invalid_argument("qr_forward: shape mismatch");
  }
  if (params.arch.out_channels != static_cast<int>(kBins)) throw std::invalid_argument("qr_forward: not a QR network");
  auto logits = net::Backbone(params.arch).forward(params, conditioning, phase, B, K, cache);
  softmax_inplace(logits, B, K);
  return logits;
}

std::vector<std::uint8_t> batch_labels(const student::Batch& batch, const QuintileEdges& edges,
                                       const targets::Normalizer& norm) {
  if (edges.K != batch.K) throw std::invalid_argument("batch_labels: K mismatch");
  std::vector<std::uint8_t> labels(batch.size * batch.K);
  for (std::size_t b = 0; b < batch.size; ++b) {
    for (std::size_t k = 0; k < batch.K; ++k) {
      const double v = norm.invert(batch.target[b * batch.K + k]);
      labels[b * batch.K + k] = static_cast<std::uint8_t>(quintile_bin(edges.at(batch.day_of_year[b], k), v));
    }
  }
  return labels;
}

QrLoss qr_loss(const net::NetParams& params, const student::Batch& batch, std::span<const std::uint8_t> labels,
               bool want_grads) {
  const std::size_t B = batch.size;
  const std::size_t K = batch.K;
  if (labels.size() != B * K) throw std::invalid_argument("qr_loss: label shape mismatch");
  net::ForwardCache cache;
  const auto p = qr_forward(params, batch.conditioning, batch.phase, B, K, want_grads ? &cache : nullptr);
  QrLoss res;
  res.per_sample.assign(B, 0.0);
  std::vector<double> dlogits(want_grads ? B * kBins * K : 0);
  const double inv = 1.0 / static_cast<double>(B * K);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* pb = p.data() + b * kBins * K;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t y = labels[b * K + k];
      if (y >= kBins) throw std::invalid_argument("qr_loss: label out of range");
      res.per_sample[b] -= std::log(pb[y * K + k]);
      if (want_grads) {
        for (std::size_t c = 0; c < kBins; ++c) {
          dlogits[(b * kBins + c) * K + k] = (pb[c * K + k] - (c == y ? 1.0 : 0.0)) * inv;
        }
      }
    }
    res.per_sample[b] /= static_cast<double>(K);
    total += res.per_sample[b];
  }
  res.loss = total / static_cast<double>(B);
  if (!std::isfinite(res.loss)) throw NumericError("qr_loss: non-finite cross-entropy");
  if (want_grads) {
    res.grads = net::Gradients::zeros_like(params);
    net::Backbone(params.arch).backward(params, cache, dlogits, res.grads);
  }
  return res;
}

double rps(std::span<const double> probs, int observed_bin) {
  if (probs.size() != kBins || observed_bin < 0 || observed_bin >= static_cast<int>(kBins)) {
    throw std::invalid_argument("rps: need 5 probabilities and a bin in 0..4");
  }
  double cum = 0.0;
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(kBins) - 1; ++t) {
    cum += probs[static_cast<std::size_t>(t)];
    const double o = observed_bin <= t ? 1.0 : 0.0;
    s += (cum - o) * (cum - o);
  }
  return s;
}

QrScores qr_evaluate(const net::NetParams& params, const student::Batch& batch, std::span<const std::uint8_t> labels) {
  constexpr std::size_t kChunk = 256;
  const std::size_t K = batch.K;
  QrScores sc;
  sc.rps_per_case.assign(batch.size, 0.0);
  sc.rps_clim_per_case.assign(batch.size, 0.0);
  const std::array<double, kBins> uniform{0.2, 0.2, 0.2, 0.2, 0.2};
  double ce = 0.0;
  std::array<double, kBins> pk{};
  for (std::size_t start = 0; start < batch.size; start += kChunk) {
    const std::size_t n = std::min(kChunk, batch.size - start);
    const std::span<const double> cond(batch.conditioning.data() + start * targets::kHistoryFrames * K,
                                       n * targets::kHistoryFrames * K);
    const std::span<const double> ph(batch.phase.data() + 2 * start, 2 * n);
    const auto p = qr_forward(params, cond, ph, n, K);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t row = start + b;
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t c = 0; c < kBins; ++c) pk[c] = p[(b * kBins + c) * K + k];
        const int y = labels[row * K + k];
        ce -= std::log(pk[static_cast<std::size_t>(y)]);
        sc.rps_per_case[row] += rps(pk, y);
        sc.rps_clim_per_case[row] += rps(uniform, y);
      }
      sc.rps_per_case[row] /= static_cast<double>(K);
      sc.rps_clim_per_case[row] /= static_cast<double>(K);
    }
  }
  const auto n = static_cast<double>(batch.size);
  sc.cross_entropy = ce / (n * static_cast<double>(K));
  sc.rps_model = std::accumulate(sc.rps_per_case.begin(), sc.rps_per_case.end(), 0.0) / n;
  sc.rps_climatology = std::accumulate(sc.rps_clim_per_case.begin(), sc.rps_clim_per_case.end(), 0.0) / n;
  sc.skill = 1.0 - sc.rps_model / sc.rps_climatology;
  return sc;
}

student::TrainResult qr_train(const student::SampleSource& train_src, const student::SampleSource& val_src,
                              const QuintileEdges& edges, const net::ArchSpec& arch,
                              const student::TrainConfig& config, const net::NetParams* init,
                              const student::ProgressFn& progress) {
  if (train_src.size() == 0 || val_src.size() == 0) throw std::invalid_argument("qr_train: empty sample source");
  student::TrainResult res;
  net::NetParams params = init ? *init : net::init_params(arch, child_seed(config.seed, 1));
  auto opt = student::AdamState::zeros_like(params);
  Rng rng(child_seed(config.seed, 2));
  auto fixed = [&](const student::SampleSource& src) {
    Rng pick_rng(child_seed(config.seed, 3));
    std::vector<std::size_t> rows(src.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), pick_rng);
    rows.resize(std::min<std::size_t>(rows.size(), static_cast<std::size_t>(config.eval_samples)));
    return src.make_batch(rows);
  };
  const auto train_eval = fixed(train_src);
  const auto val_eval = fixed(val_src);
  const auto train_labels = batch_labels(train_eval, edges, train_src.normalizer());
  const auto val_labels = batch_labels(val_eval, edges, val_src.normalizer());

  auto evaluate = [&](int step) {
    const auto t = qr_evaluate(params, train_eval, train_labels);
    const auto v = qr_evaluate(params, val_eval, val_labels);
    student::CurvePoint pt{step, t.cross_entropy, v.cross_entropy};
    res.curve.push_back(pt);
    if (res.curve.size() == 1 || pt.val_loss < res.best_val) {
      res.best_val = pt.val_loss;
      res.best_step = step;
      res.best = params;
      res.best_val_per_sample = v.rps_per_case;
    }
    if (progress) progress(pt);
  };

  evaluate(0);
  std::uniform_int_distribution<std::size_t> pick(0, train_src.size() - 1);
  std::vector<std::size_t> rows(static_cast<std::size_t>(config.batch));
  for (int step = 1; step <= config.steps; ++step) {
    for (auto& r : rows) r = pick(rng);
    const auto batch = train_src.make_batch(rows);
    const auto labels = batch_labels(batch, edges, train_src.normalizer());
    QrLoss l;
    try {
      l = qr_loss(params, batch, labels);
    } catch (const NumericError& e) {
      throw student::TrainingDiverged(std::string("quantile training diverged at step ") + std::to_string(step) +
                                          ": " + e.what(),
                                      params, step - 1);
    }
    student::adam_step(params, l.grads, opt, config.lr, config.trainable);
    if (step % config.eval_every == 0 || step == config.steps) evaluate(step);
  }
  res.last = std::move(params);
  res.optimizer = std::move(opt);
  return res;
}

}  // namespace lrd::qr
