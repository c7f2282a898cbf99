#include "anomid/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "anomid/error.hpp"

namespace anomid {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

AnomalyClass label_at(std::size_t i) { return static_cast<AnomalyClass>(i); }

using LabelRow = std::array<double, kNumLabels>;

// Per-sequence score tables: start[y], trans[p][y], emit[t][y].
struct Potentials {
  LabelRow start{};
  std::array<LabelRow, kNumLabels> trans{};
  std::vector<LabelRow> emit;
};

Potentials potentials(const CrfModel& m, std::span<const DiscreteObservation> obs) {
  Potentials p;
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    p.start[y] = m.weights[m.index.start_index(label_at(y))];
    for (std::size_t q = 0; q < kNumLabels; ++q) {
      p.trans[q][y] = m.weights[m.index.trans_index(label_at(q), label_at(y))];
    }
  }
  p.emit.resize(obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      double s = 0.0;
      for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
        const auto j = m.index.emit_index(label_at(y), c, obs[t].codes[c]);
        if (j >= 0) s += m.weights[static_cast<std::size_t>(j)];
      }
      p.emit[t][y] = s;
    }
  }
  return p;
}

std::vector<LabelRow> forward(const Potentials& p) {
  const std::size_t n = p.emit.size();
  std::vector<LabelRow> alpha(n);
  for (std::size_t y = 0; y < kNumLabels; ++y) alpha[0][y] = p.start[y] + p.emit[0][y];
  LabelRow tmp{};
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      for (std::size_t q = 0; q < kNumLabels; ++q) tmp[q] = alpha[t - 1][q] + p.trans[q][y];
      alpha[t][y] = log_sum_exp(tmp) + p.emit[t][y];
    }
  }
  return alpha;
}

std::vector<LabelRow> backward(const Potentials& p) {
  const std::size_t n = p.emit.size();
  std::vector<LabelRow> beta(n);
  beta[n - 1].fill(0.0);
  LabelRow tmp{};
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t q = 0; q < kNumLabels; ++q) {
      for (std::size_t y = 0; y < kNumLabels; ++y) tmp[y] = p.trans[q][y] + p.emit[t + 1][y] + beta[t + 1][y];
      beta[t][q] = log_sum_exp(tmp);
    }
  }
  return beta;
}

void require_nonempty(std::span<const DiscreteObservation> obs) {
  if (obs.empty()) throw DataError("CRF: empty observation sequence");
}

void check_codes(const DiscreteObservation& x) {
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    if (x.codes[c] < 0 || static_cast<std::size_t>(x.codes[c]) >= kChannelCardinality[c]) {
      throw DataError(fmt::format("CRF: code {} out of range for channel {}", x.codes[c], kChannelNames[c]));
    }
  }
}

// Adds scale * (feature counts of the labelling) into out.
void add_counts(const CrfModel& m, const CrfSequence& seq, std::span<const AnomalyClass> labels,
                double scale, std::span<double> out) {
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const auto y = labels[t];
    out[t == 0 ? m.index.start_index(y) : m.index.trans_index(labels[t - 1], y)] += scale;
    for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
      const auto j = m.index.emit_index(y, c, seq.obs[t].codes[c]);
      if (j >= 0) out[static_cast<std::size_t>(j)] += scale;
    }
  }
}

std::size_t channel_by_name(std::string_view name) {
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    if (name == kChannelNames[c]) return c;
  }
  throw DataError(fmt::format("unknown channel '{}'", name));
}

std::vector<std::string_view> split_bar(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto bar = s.find('|', pos);
    parts.push_back(s.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
    if (bar == std::string_view::npos) break;
    pos = bar + 1;
  }
  return parts;
}

bool feature_less(const CrfFeature& a, const CrfFeature& b) {
  auto key = [](const CrfFeature& f) {
    switch (f.tmpl) {
      case CrfTemplate::Start: return std::tuple(0, 0, 0, static_cast<int>(f.label));
      case CrfTemplate::Trans: return std::tuple(1, static_cast<int>(f.prev), 0, static_cast<int>(f.label));
      case CrfTemplate::Emit: break;
    }
    return std::tuple(2 + static_cast<int>(f.channel), static_cast<int>(f.code), 0, static_cast<int>(f.label));
  };
  return key(a) < key(b);
}

}  // namespace

std::string feature_identity(const CrfFeature& f) {
  switch (f.tmpl) {
    case CrfTemplate::Start: return fmt::format("S|{}", to_string(f.label));
    case CrfTemplate::Trans: return fmt::format("T|{}|{}", to_string(f.prev), to_string(f.label));
    case CrfTemplate::Emit: break;
  }
  return fmt::format("E|{}|{}|{}", to_string(f.label), kChannelNames[f.channel], f.code);
}

CrfFeature parse_feature_identity(std::string_view s) {
  const auto parts = split_bar(s);
  CrfFeature f;
  try {
    if (parts[0] == "S" && parts.size() == 2) {
      f.tmpl = CrfTemplate::Start;
      f.label = parse_anomaly_class(parts[1]);
      return f;
    }
    if (parts[0] == "T" && parts.size() == 3) {
      f.tmpl = CrfTemplate::Trans;
      f.prev = parse_anomaly_class(parts[1]);
      f.label = parse_anomaly_class(parts[2]);
      return f;
    }
    if (parts[0] == "E" && parts.size() == 4) {
      f.tmpl = CrfTemplate::Emit;
      f.label = parse_anomaly_class(parts[1]);
      const auto c = channel_by_name(parts[2]);
      f.channel = static_cast<std::uint8_t>(c);
      const std::string code_str(parts[3]);
      std::size_t used = 0;
      const int code = std::stoi(code_str, &used);
      if (used != code_str.size() || code < 0 || static_cast<std::size_t>(code) >= kChannelCardinality[c]) {
        throw DataError("bad code");
      }
      f.code = static_cast<std::uint8_t>(code);
      return f;
    }
  } catch (const std::exception&) {
  }
  throw DataError(fmt::format("malformed CRF feature identity '{}'", s));
}

CrfFeatureIndex::CrfFeatureIndex() {
  for (std::size_t y = 0; y < kNumLabels; ++y) {
    features_.push_back({CrfTemplate::Start, label_at(y), AnomalyClass::Safe, 0, 0});
  }
  for (std::size_t q = 0; q < kNumLabels; ++q) {
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      features_.push_back({CrfTemplate::Trans, label_at(y), label_at(q), 0, 0});
    }
  }
  rebuild_lookup();
}

CrfFeatureIndex CrfFeatureIndex::build(std::span<const std::vector<DiscreteObservation>> sequences) {
  std::array<std::vector<bool>, kNumDiscreteChannels> seen;
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) seen[c].assign(kChannelCardinality[c], false);
  for (const auto& seq : sequences) {
    for (const auto& x : seq) {
      check_codes(x);
      for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) seen[c][static_cast<std::size_t>(x.codes[c])] = true;
    }
  }
  CrfFeatureIndex idx;
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    for (std::size_t code = 0; code < kChannelCardinality[c]; ++code) {
      if (!seen[c][code]) continue;
      for (std::size_t y = 0; y < kNumLabels; ++y) {
        idx.features_.push_back({CrfTemplate::Emit, label_at(y), AnomalyClass::Safe,
                                 static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(code)});
      }
    }
  }
  idx.rebuild_lookup();
  return idx;
}

CrfFeatureIndex CrfFeatureIndex::from_features(std::span<const CrfFeature> features) {
  std::vector<CrfFeature> sorted(features.begin(), features.end());
  std::sort(sorted.begin(), sorted.end(), feature_less);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] == sorted[i - 1]) {
      throw DataError(fmt::format("duplicate CRF feature '{}'", feature_identity(sorted[i])));
    }
  }
  CrfFeatureIndex idx;
  const std::size_t fixed = idx.features_.size();
  if (sorted.size() < fixed || !std::equal(idx.features_.begin(), idx.features_.end(), sorted.begin())) {
    throw DataError("CRF feature index lacks the START/TRANS features");
  }
  for (std::size_t i = fixed; i < sorted.size(); ++i) {
    const auto& f = sorted[i];
    if (f.tmpl != CrfTemplate::Emit || f.channel >= kNumDiscreteChannels ||
        f.code >= kChannelCardinality[f.channel]) {
      throw DataError(fmt::format("invalid CRF feature '{}'", feature_identity(f)));
    }
  }
  idx.features_ = std::move(sorted);
  idx.rebuild_lookup();
  return idx;
}

void CrfFeatureIndex::rebuild_lookup() {
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) emit_lookup_[c].assign(kChannelCardinality[c] * kNumLabels, -1);
  for (std::size_t j = 0; j < features_.size(); ++j) {
    const auto& f = features_[j];
    if (f.tmpl != CrfTemplate::Emit) continue;
    emit_lookup_[f.channel][f.code * kNumLabels + index_of(f.label)] = static_cast<std::int64_t>(j);
  }
}

std::int64_t CrfFeatureIndex::emit_index(AnomalyClass y, std::size_t channel, int code) const {
  if (code < 0 || static_cast<std::size_t>(code) >= kChannelCardinality[channel]) return -1;
  return emit_lookup_[channel][static_cast<std::size_t>(code) * kNumLabels + index_of(y)];
}

CrfModel CrfModel::zeros(CrfFeatureIndex index, FeaturizerStats stats) {
  CrfModel m;
  m.weights.assign(index.size(), 0.0);
  m.index = std::move(index);
  m.stats = stats;
  return m;
}

void validate(const CrfModel& m) {
  if (m.weights.size() != m.index.size()) {
    throw DataError(fmt::format("CRF has {} weights for {} features", m.weights.size(), m.index.size()));
  }
  for (double w : m.weights) {
    if (!std::isfinite(w)) throw DataError("CRF weight is not finite");
  }
}

std::vector<CrfSequence> make_sequences(std::span<const Episode> episodes, const FeaturizerStats& stats) {
  std::vector<CrfSequence> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) {
    const auto obs = ep.observations();
    out.push_back({discretize_sequence(obs, stats), ep.labels()});
  }
  return out;
}

double score_position(const CrfModel& m, std::optional<AnomalyClass> prev, AnomalyClass label,
                      const DiscreteObservation& x) {
  double s = m.weights[prev ? m.index.trans_index(*prev, label) : m.index.start_index(label)];
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    const auto j = m.index.emit_index(label, c, x.codes[c]);
    if (j >= 0) s += m.weights[static_cast<std::size_t>(j)];
  }
  return s;
}

double sequence_score(const CrfModel& m, std::span<const DiscreteObservation> obs,
                      std::span<const AnomalyClass> labels) {
  if (obs.size() != labels.size()) throw DataError("CRF: observation and label lengths differ");
  double s = 0.0;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    s += score_position(m, t == 0 ? std::nullopt : std::optional(labels[t - 1]), labels[t], obs[t]);
  }
  return s;
}

double log_partition(const CrfModel& m, std::span<const DiscreteObservation> obs) {
  require_nonempty(obs);
  const auto alpha = forward(potentials(m, obs));
  return log_sum_exp(alpha.back());
}

NllResult nll_and_gradient(const CrfModel& m, std::span<const CrfSequence> batch, double l2) {
  if (batch.empty()) throw DataError("CRF: empty training batch");
  if (!(l2 >= 0.0)) throw DataError("CRF: l2 must be >= 0");
  NllResult res;
  res.gradient.assign(m.index.size(), 0.0);
  auto& grad = res.gradient;
  for (const auto& seq : batch) {
    require_nonempty(seq.obs);
    if (seq.labels.size() != seq.obs.size()) throw DataError("CRF: observation and label lengths differ");
    const auto p = potentials(m, seq.obs);
    const auto alpha = forward(p);
    const auto beta = backward(p);
    const double log_z = log_sum_exp(alpha.back());
    const std::size_t n = seq.obs.size();

    double gold = p.start[index_of(seq.labels[0])];
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) gold += p.trans[index_of(seq.labels[t - 1])][index_of(seq.labels[t])];
      gold += p.emit[t][index_of(seq.labels[t])];
    }
    res.value += log_z - gold;

    add_counts(m, seq, seq.labels, -1.0, grad);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t y = 0; y < kNumLabels; ++y) {
        const double marg = std::exp(alpha[t][y] + beta[t][y] - log_z);
        if (t == 0) grad[m.index.start_index(label_at(y))] += marg;
        for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
          const auto j = m.index.emit_index(label_at(y), c, seq.obs[t].codes[c]);
          if (j >= 0) grad[static_cast<std::size_t>(j)] += marg;
        }
        if (t == 0) continue;
        for (std::size_t q = 0; q < kNumLabels; ++q) {
          const double edge = std::exp(alpha[t - 1][q] + p.trans[q][y] + p.emit[t][y] + beta[t][y] - log_z);
          grad[m.index.trans_index(label_at(q), label_at(y))] += edge;
        }
      }
    }
  }
  for (std::size_t j = 0; j < grad.size(); ++j) {
    res.value += 0.5 * l2 * m.weights[j] * m.weights[j];
    grad[j] += l2 * m.weights[j];
  }
  if (!std::isfinite(res.value)) throw DivergenceError("CRF: objective is not finite");
  for (double g : grad) {
    if (!std::isfinite(g)) throw DivergenceError("CRF: gradient is not finite");
  }
  return res;
}

std::vector<AnomalyClass> decode(const CrfModel& m, std::span<const DiscreteObservation> obs) {
  require_nonempty(obs);
  const auto p = potentials(m, obs);
  const std::size_t n = obs.size();
  std::vector<std::array<std::uint8_t, kNumLabels>> back(n);
  LabelRow v{};
  for (std::size_t y = 0; y < kNumLabels; ++y) v[y] = p.start[y] + p.emit[0][y];
  for (std::size_t t = 1; t < n; ++t) {
    LabelRow next{};
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      std::size_t best = 0;
      double best_score = v[0] + p.trans[0][y];
      for (std::size_t q = 1; q < kNumLabels; ++q) {
        const double s = v[q] + p.trans[q][y];
        if (s > best_score) {
          best_score = s;
          best = q;
        }
      }
      back[t][y] = static_cast<std::uint8_t>(best);
      next[y] = best_score + p.emit[t][y];
    }
    v = next;
  }
  std::size_t y = 0;
  for (std::size_t q = 1; q < kNumLabels; ++q) {
    if (v[q] > v[y]) y = q;
  }
  std::vector<AnomalyClass> path(n);
  for (std::size_t t = n; t-- > 0;) {
    path[t] = label_at(y);
    if (t > 0) y = back[t][y];
  }
  return path;
}

std::vector<AnomalyClass> decode(const CrfModel& m, std::span<const Observation> obs) {
  return decode(m, std::span<const DiscreteObservation>(discretize_sequence(obs, m.stats)));
}

namespace {

CrfFeatureIndex index_for(std::span<const CrfSequence> train) {
  std::vector<std::vector<DiscreteObservation>> obs;
  obs.reserve(train.size());
  for (const auto& s : train) obs.push_back(s.obs);
  return CrfFeatureIndex::build(obs);
}

}  // namespace

CrfModel train_lbfgs(std::span<const CrfSequence> train, const CrfLbfgsConfig& cfg, CrfTrainReport* report) {
  if (train.empty()) throw DataError("CRF: empty training set");
  CrfModel model = CrfModel::zeros(index_for(train));
  const Objective objective = [&](std::span<const double> w, std::span<double> g) {
    std::copy(w.begin(), w.end(), model.weights.begin());
    auto r = nll_and_gradient(model, train, cfg.l2);
    std::copy(r.gradient.begin(), r.gradient.end(), g.begin());
    return r.value;
  };
  auto res = minimize_lbfgs(objective, std::vector<double>(model.index.size(), 0.0), cfg.lbfgs);
  model.weights = std::move(res.x);
  if (report) {
    report->iterations = res.iterations;
    report->converged = res.converged;
    report->warning = res.line_search_failed;
    report->objective_history = std::move(res.value_history);
  }
  return model;
}

CrfModel train_lbfgs(std::span<const Episode> train, const FeaturizerStats& stats, const CrfLbfgsConfig& cfg,
                     CrfTrainReport* report) {
  const auto seqs = make_sequences(train, stats);
  CrfModel m = train_lbfgs(std::span<const CrfSequence>(seqs), cfg, report);
  m.stats = stats;
  return m;
}

bool arow_update(CrfModel& m, ArowState& state, const CrfSequence& seq, double r) {
  if (!(r > 0.0)) throw DataError("AROW: r must be > 0");
  if (state.variance.size() != m.weights.size()) state.variance.assign(m.weights.size(), 1.0);
  const auto decoded = decode(m, std::span<const DiscreteObservation>(seq.obs));
  if (decoded == seq.labels) return false;
  std::vector<double> delta(m.weights.size(), 0.0);
  add_counts(m, seq, seq.labels, 1.0, delta);
  add_counts(m, seq, decoded, -1.0, delta);
  double margin = 0.0;
  double confidence = 0.0;
  for (std::size_t j = 0; j < delta.size(); ++j) {
    margin += m.weights[j] * delta[j];
    confidence += delta[j] * state.variance[j] * delta[j];
  }
  const double loss = std::max(0.0, 1.0 - margin);
  if (loss == 0.0 || confidence == 0.0) return false;
  const double beta = 1.0 / (confidence + r);
  const double alpha = loss * beta;
  for (std::size_t j = 0; j < delta.size(); ++j) {
    if (delta[j] == 0.0) continue;
    const double s = state.variance[j];
    m.weights[j] += alpha * s * delta[j];
    state.variance[j] = s - beta * s * s * delta[j] * delta[j];
  }
  ++state.updates;
  return true;
}

CrfModel train_arow(std::span<const CrfSequence> train, const CrfArowConfig& cfg, ArowState* state_out) {
  if (train.empty()) throw DataError("CRF: empty training set");
  if (cfg.epochs < 0) throw DataError("AROW: epochs must be >= 0");
  CrfModel model = CrfModel::zeros(index_for(train));
  ArowState state;
  state.variance.assign(model.index.size(), 1.0);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(cfg.shuffle_seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) arow_update(model, state, train[i], cfg.r);
  }
  if (state_out) *state_out = std::move(state);
  return model;
}

CrfModel train_arow(std::span<const Episode> train, const FeaturizerStats& stats, const CrfArowConfig& cfg,
                    ArowState* state) {
  const auto seqs = make_sequences(train, stats);
  CrfModel m = train_arow(std::span<const CrfSequence>(seqs), cfg, state);
  m.stats = stats;
  return m;
}

}  // namespace anomid
