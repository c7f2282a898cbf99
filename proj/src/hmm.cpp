#include "anomid/hmm.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "anomid/error.hpp"

namespace anomid {

namespace {

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct LogTables {
  std::array<double, kNumHiddenStates> initial;
  std::array<std::array<double, kNumHiddenStates>, kNumHiddenStates> transition;
};

LogTables log_tables(const HmmModel& m) {
  LogTables lt{};
  for (std::size_t i = 0; i < kNumHiddenStates; ++i) {
    lt.initial[i] = std::log(m.initial[i]);
    for (std::size_t j = 0; j < kNumHiddenStates; ++j) lt.transition[i][j] = std::log(m.transition[i][j]);
  }
  return lt;
}

void require_nonempty(std::span<const DiscreteObservation> obs) {
  if (obs.empty()) throw DataError("HMM: empty observation sequence");
}

std::size_t state_of(AnomalyClass label) {
  return label == AnomalyClass::Safe ? 0 : 1;
}

}  // namespace

HmmModel HmmModel::uniform(AnomalyClass cls) {
  HmmModel m;
  m.anomaly_class = cls;
  m.initial = {0.5, 0.5};
  for (auto& row : m.transition) row = {0.5, 0.5};
  for (auto& per_state : m.emission) {
    for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
      per_state[c].assign(kChannelCardinality[c], 1.0 / static_cast<double>(kChannelCardinality[c]));
    }
  }
  return m;
}

double HmmModel::log_emission(std::size_t state, const DiscreteObservation& x) const {
  double lp = 0.0;
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    lp += std::log(emission[state][c][static_cast<std::size_t>(x.codes[c])]);
  }
  return lp;
}

void validate(const HmmModel& m, double tol) {
  auto check = [&](std::span<const double> dist, const std::string& what) {
    double sum = 0.0;
    for (double p : dist) {
      if (!std::isfinite(p) || p <= 0.0) throw DataError(fmt::format("HMM {}: non-positive entry", what));
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) throw DataError(fmt::format("HMM {}: sums to {}", what, sum));
  };
  if (m.anomaly_class == AnomalyClass::Safe) throw DataError("HMM model class must be an anomaly");
  check(m.initial, "initial");
  for (std::size_t i = 0; i < kNumHiddenStates; ++i) {
    check(m.transition[i], fmt::format("transition row {}", i));
    for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
      if (m.emission[i][c].size() != kChannelCardinality[c])
        throw DataError(fmt::format("HMM emission {} has wrong size", kChannelNames[c]));
      check(m.emission[i][c], fmt::format("emission state {} channel {}", i, kChannelNames[c]));
    }
  }
}

const HmmModel& HmmBank::model_for(AnomalyClass cls) const {
  for (const auto& m : models) {
    if (m.anomaly_class == cls) return m;
  }
  throw DataError(fmt::format("HMM bank has no model for {}", to_string(cls)));
}

HmmModel fit_model(std::span<const Episode> train, AnomalyClass cls, const FeaturizerStats& stats,
                   double smoothing) {
  if (!(smoothing > 0.0)) throw DataError("HMM smoothing must be > 0");
  std::array<double, kNumHiddenStates> init{};
  std::array<std::array<double, kNumHiddenStates>, kNumHiddenStates> trans{};
  std::array<std::array<std::vector<double>, kNumDiscreteChannels>, kNumHiddenStates> emit;
  for (auto& per_state : emit) {
    for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) per_state[c].assign(kChannelCardinality[c], 0.0);
  }
  std::size_t used = 0;
  for (const auto& ep : train) {
    if (ep.case_label != cls) continue;
    ++used;
    std::size_t prev = 0;
    for (std::size_t t = 0; t < ep.samples.size(); ++t) {
      const std::size_t s = state_of(ep.samples[t].label);
      if (t == 0) {
        init[s] += 1.0;
      } else {
        trans[prev][s] += 1.0;
      }
      const auto x = discretize(ep.samples[t].obs, stats);
      for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
        emit[s][c][static_cast<std::size_t>(x.codes[c])] += 1.0;
      }
      prev = s;
    }
  }
  if (used == 0) throw DataError(fmt::format("HMM: no training episodes for class {}", to_string(cls)));

  auto normalize = [smoothing](std::span<double> counts) {
    double total = 0.0;
    for (double c : counts) total += c + smoothing;
    for (double& c : counts) c = (c + smoothing) / total;
  };
  HmmModel m;
  m.anomaly_class = cls;
  normalize(init);
  m.initial = init;
  for (std::size_t i = 0; i < kNumHiddenStates; ++i) {
    normalize(trans[i]);
    m.transition[i] = trans[i];
    for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) normalize(emit[i][c]);
  }
  m.emission = std::move(emit);
  return m;
}

HmmBank fit_supervised(std::span<const Episode> train, const FeaturizerStats& stats, double smoothing) {
  HmmBank bank;
  bank.stats = stats;
  for (auto cls : kAnomalyClasses) bank.models.push_back(fit_model(train, cls, stats, smoothing));
  return bank;
}

double log_likelihood(const HmmModel& m, std::span<const DiscreteObservation> obs) {
  require_nonempty(obs);
  const LogTables lt = log_tables(m);
  std::array<double, kNumHiddenStates> alpha{};
  for (std::size_t s = 0; s < kNumHiddenStates; ++s) alpha[s] = lt.initial[s] + m.log_emission(s, obs[0]);
  for (std::size_t t = 1; t < obs.size(); ++t) {
    std::array<double, kNumHiddenStates> next{};
    for (std::size_t j = 0; j < kNumHiddenStates; ++j) {
      double acc = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < kNumHiddenStates; ++i) acc = log_sum_exp(acc, alpha[i] + lt.transition[i][j]);
      next[j] = acc + m.log_emission(j, obs[t]);
    }
    alpha = next;
  }
  return log_sum_exp(alpha[0], alpha[1]);
}

std::vector<HiddenState> viterbi(const HmmModel& m, std::span<const DiscreteObservation> obs) {
  require_nonempty(obs);
  const LogTables lt = log_tables(m);
  const std::size_t n = obs.size();
  // v[s]: best log score of a path ending in s; back[t][s]: its predecessor.
  std::array<double, kNumHiddenStates> v{};
  std::vector<std::array<std::uint8_t, kNumHiddenStates>> back(n);
  for (std::size_t s = 0; s < kNumHiddenStates; ++s) v[s] = lt.initial[s] + m.log_emission(s, obs[0]);
  for (std::size_t t = 1; t < n; ++t) {
    std::array<double, kNumHiddenStates> next{};
    for (std::size_t j = 0; j < kNumHiddenStates; ++j) {
      std::size_t best = 0;
      double best_score = v[0] + lt.transition[0][j];
      for (std::size_t i = 1; i < kNumHiddenStates; ++i) {
        const double score = v[i] + lt.transition[i][j];
        if (score > best_score) {
          best_score = score;
          best = i;
        }
      }
      back[t][j] = static_cast<std::uint8_t>(best);
      next[j] = best_score + m.log_emission(j, obs[t]);
    }
    v = next;
  }
  std::size_t state = v[1] > v[0] ? 1 : 0;
  std::vector<HiddenState> path(n);
  for (std::size_t t = n; t-- > 0;) {
    path[t] = static_cast<HiddenState>(state);
    if (t > 0) state = back[t][state];
  }
  return path;
}

HmmDecision classify_detailed(const HmmBank& bank, std::span<const Observation> obs) {
  if (obs.empty()) throw DataError("HMM: empty observation sequence");
  const auto codes = discretize_sequence(obs, bank.stats);
  HmmDecision d;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kAnomalyClasses.size(); ++k) {
    const auto cls = kAnomalyClasses[k];
    d.log_likelihoods[k] = log_likelihood(bank.model_for(cls), codes);
    if (k == 0 || d.log_likelihoods[k] > best) {
      best = d.log_likelihoods[k];
      d.selected = cls;
    }
  }
  const auto path = viterbi(bank.model_for(d.selected), codes);
  d.labels.reserve(path.size());
  for (auto s : path) d.labels.push_back(s == HiddenState::Safe ? AnomalyClass::Safe : d.selected);
  return d;
}

std::vector<AnomalyClass> classify_sequence(const HmmBank& bank, std::span<const Observation> obs) {
  return classify_detailed(bank, obs).labels;
}

}  // namespace anomid
