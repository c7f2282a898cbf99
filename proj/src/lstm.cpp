#include "anomid/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "anomid/dense.hpp"
#include "anomid/error.hpp"
#include "anomid/metrics.hpp"

namespace anomid {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ClassLogProbs log_softmax(const ClassLogProbs& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  const double lse = m + std::log(s);
  ClassLogProbs out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = logits[k] - lse;
  return out;
}

ClassLogProbs head(const LstmParams& p, std::span<const double> h) {
  ClassLogProbs logits{};
  for (std::size_t k = 0; k < kNumClasses; ++k) logits[k] = p.d()[k];
  dense::matvec_add(p.v(), kNumClasses, p.hidden(), h, logits);
  return log_softmax(logits);
}

AnomalyClass argmax(const ClassLogProbs& lp) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumClasses; ++k) {
    if (lp[k] > lp[best]) best = k;
  }
  return static_cast<AnomalyClass>(best);
}

}  // namespace

LstmParams::LstmParams(std::size_t hidden, std::size_t input) : hidden_(hidden), input_(input) {
  if (hidden == 0 || input == 0) throw DataError("LSTM sizes must be positive");
  data_.assign(4 * hidden * hidden + input * 4 * hidden + 4 * hidden + kNumClasses * hidden + kNumClasses, 0.0);
}

LstmParams LstmParams::initialized(std::size_t hidden, std::uint64_t seed, std::size_t input) {
  LstmParams p(hidden, input);
  std::mt19937_64 rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-k, k);
  for (double& x : p.data_) x = dist(rng);
  for (std::size_t u = 0; u < hidden; ++u) p.b_at(LstmGate::Forget, u) = 1.0;
  return p;
}

LstmState lstm_step(const LstmParams& p, const LstmState& prev, std::span<const double> x, LstmStepCache* cache) {
  const std::size_t H = p.hidden();
  if (x.size() != p.input() || prev.c.size() != H || prev.h.size() != H) {
    throw DataError("LSTM step: shape mismatch");
  }
  std::vector<double> z(p.b().begin(), p.b().end());
  dense::matvec_add(p.w(), 4 * H, H, prev.h, z);
  const auto ut = p.ut();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) dense::axpy(x[i], ut.subspan(i * 4 * H, 4 * H), z);
  }
  for (std::size_t u = 0; u < H; ++u) {
    z[u] = sigmoid(z[u]);
    z[H + u] = sigmoid(z[H + u]);
    z[2 * H + u] = std::tanh(z[2 * H + u]);
    z[3 * H + u] = sigmoid(z[3 * H + u]);
  }
  LstmState next = LstmState::zeros(H);
  for (std::size_t u = 0; u < H; ++u) {
    next.c[u] = z[u] * prev.c[u] + z[H + u] * z[2 * H + u];
    next.h[u] = z[3 * H + u] * std::tanh(next.c[u]);
    if (!std::isfinite(next.c[u]) || !std::isfinite(next.h[u])) {
      throw DivergenceError("LSTM state is not finite");
    }
  }
  if (cache) {
    cache->gates = std::move(z);
    cache->state = next;
  }
  return next;
}

LstmForward forward_sequence(const LstmParams& p, std::span<const FeatureVector> xs, bool keep_caches) {
  if (xs.empty()) throw DataError("LSTM: empty input sequence");
  LstmForward out;
  out.log_probs.reserve(xs.size());
  if (keep_caches) out.caches.resize(xs.size());
  LstmState state = LstmState::zeros(p.hidden());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    state = lstm_step(p, state, xs[t], keep_caches ? &out.caches[t] : nullptr);
    out.log_probs.push_back(head(p, state.h));
  }
  return out;
}

double loss_and_gradients(const LstmParams& p, std::span<const FeatureVector> xs, std::span<const AnomalyClass> gold,
                          std::vector<double>& grad_out, std::vector<AnomalyClass>* predicted) {
  if (xs.size() != gold.size()) throw DataError("LSTM: input and label lengths differ");
  const std::size_t n = xs.size();
  const std::size_t H = p.hidden();
  const auto fwd = forward_sequence(p, xs, true);

  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) loss -= fwd.log_probs[t][index_of(gold[t])];
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw DivergenceError("LSTM loss is not finite");
  if (predicted) *predicted = argmax_labels(fwd.log_probs);

  LstmParams grad(H, p.input());
  auto gw = grad.w();
  auto gut = grad.ut();
  auto gb = grad.b();
  auto gv = grad.v();
  auto gd = grad.d();
  const std::vector<double> zeros(H, 0.0);
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dh(H), dz(4 * H);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t t = n; t-- > 0;) {
    const auto& cache = fwd.caches[t];
    const auto& h_prev = t > 0 ? fwd.caches[t - 1].state.h : zeros;
    const auto& c_prev = t > 0 ? fwd.caches[t - 1].state.c : zeros;

    std::array<double, kNumClasses> dlogit{};
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      dlogit[k] = (std::exp(fwd.log_probs[t][k]) - (k == index_of(gold[t]) ? 1.0 : 0.0)) * inv_n;
      gd[k] += dlogit[k];
    }
    dense::outer_add(gv, kNumClasses, H, dlogit, cache.state.h);
    dh = dh_next;
    dense::matvec_t_add(p.v(), kNumClasses, H, dlogit, dh);

    const auto& a = cache.gates;
    for (std::size_t u = 0; u < H; ++u) {
      const double f = a[u], i = a[H + u], g = a[2 * H + u], o = a[3 * H + u];
      const double tc = std::tanh(cache.state.c[u]);
      const double dc = dh[u] * o * (1.0 - tc * tc) + dc_next[u];
      dz[u] = dc * c_prev[u] * f * (1.0 - f);
      dz[H + u] = dc * g * i * (1.0 - i);
      dz[2 * H + u] = dc * i * (1.0 - g * g);
      dz[3 * H + u] = dh[u] * tc * o * (1.0 - o);
      dc_next[u] = dc * f;
    }
    dense::outer_add(gw, 4 * H, H, dz, h_prev);
    const auto& x = xs[t];
    for (std::size_t in = 0; in < x.size(); ++in) {
      if (x[in] != 0.0) dense::axpy(x[in], dz, gut.subspan(in * 4 * H, 4 * H));
    }
    dense::axpy(1.0, dz, gb);
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    dense::matvec_t_add(p.w(), 4 * H, H, dz, dh_next);
  }
  grad_out.assign(grad.values().begin(), grad.values().end());
  return loss;
}

void AdamState::apply(std::span<double> params, std::span<const double> grad) {
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
    step = 0;
  }
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t j = 0; j < params.size(); ++j) {
    m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
    v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
    params[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
  }
}

LstmTrainResult train_lstm(std::span<const Episode> train, const FeaturizerStats& stats,
                           const LstmTrainConfig& cfg, const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("LSTM: empty training set");
  if (cfg.epochs < 1) throw DataError("LSTM: epochs must be >= 1");
  if (!(cfg.lr > 0.0)) throw DataError("LSTM: learning rate must be > 0");

  std::vector<std::vector<FeatureVector>> xs;
  std::vector<std::vector<AnomalyClass>> ys;
  for (const auto& ep : train) {
    if (ep.samples.empty()) throw DataError(fmt::format("episode '{}' is empty", ep.id));
    const auto obs = ep.observations();
    xs.push_back(encode_sequence(obs, stats));
    ys.push_back(ep.labels());
  }

  LstmTrainResult res;
  res.model.stats = stats;
  auto& params = res.model.params;
  params = LstmParams::initialized(cfg.hidden, cfg.init_seed);
  AdamState adam;
  adam.lr = cfg.lr;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.init_seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  std::vector<double> grad;
  std::vector<AnomalyClass> predicted;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    StateConfusion conf;
    for (auto k : order) {
      double loss = 0.0;
      try {
        loss = loss_and_gradients(params, xs[k], ys[k], grad, &predicted);
      } catch (const DivergenceError& e) {
        throw DivergenceError(fmt::format("LSTM training diverged at epoch {}: {}", epoch, e.what()));
      }
      total += loss;
      conf.add(ys[k], predicted);
      if (cfg.grad_clip > 0.0) {
        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        const double norm = std::sqrt(norm2);
        if (norm > cfg.grad_clip) {
          const double scale = cfg.grad_clip / norm;
          for (double& g : grad) g *= scale;
        }
      }
      adam.apply(params.values(), grad);
    }
    EpochStats st{epoch, total / static_cast<double>(order.size()), compute_metrics(conf).overall.f};
    if (!std::isfinite(st.loss)) throw DivergenceError(fmt::format("LSTM training diverged at epoch {}", epoch));
    res.curve.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return res;
}

std::vector<AnomalyClass> argmax_labels(std::span<const ClassLogProbs> log_probs) {
  std::vector<AnomalyClass> out;
  out.reserve(log_probs.size());
  for (const auto& lp : log_probs) out.push_back(argmax(lp));
  return out;
}

std::vector<AnomalyClass> predict_labels(const LstmModel& model, std::span<const Observation> obs) {
  const auto xs = encode_sequence(obs, model.stats);
  return argmax_labels(forward_sequence(model.params, xs).log_probs);
}

}  // namespace anomid
