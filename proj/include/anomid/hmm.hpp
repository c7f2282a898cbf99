#pragma once

// One two-state (safe / anomaly) HMM per anomaly class. Emissions factor over
// the seven discrete channels. Scoring and decoding run in log space.

#include <array>
#include <span>
#include <vector>

#include "anomid/episode.hpp"
#include "anomid/features.hpp"

namespace anomid {

enum class HiddenState : std::uint8_t { Safe = 0, Anomaly = 1 };
inline constexpr std::size_t kNumHiddenStates = 2;

struct HmmModel {
  AnomalyClass anomaly_class = AnomalyClass::Loc;
  std::array<double, kNumHiddenStates> initial{};
  // transition[from][to]
  std::array<std::array<double, kNumHiddenStates>, kNumHiddenStates> transition{};
  // emission[state][channel][code]
  std::array<std::array<std::vector<double>, kNumDiscreteChannels>, kNumHiddenStates> emission;

  // Every distribution uniform.
  static HmmModel uniform(AnomalyClass cls);

  double log_emission(std::size_t state, const DiscreteObservation& x) const;

  friend bool operator==(const HmmModel&, const HmmModel&) = default;
};

// Throws DataError unless shapes match the channel layout, every entry is
// positive and finite, and each distribution sums to 1 within tol.
void validate(const HmmModel& model, double tol = 1e-9);

struct HmmBank {
  std::vector<HmmModel> models;  // one per anomaly class, any order
  FeaturizerStats stats;

  const HmmModel& model_for(AnomalyClass cls) const;
};

// Smoothed maximum-likelihood counts over the episodes whose case_label is
// the given class, with ground-truth labels as hidden-state supervision.
HmmModel fit_model(std::span<const Episode> train, AnomalyClass cls,
                   const FeaturizerStats& stats, double smoothing);

// Throws DataError if any anomaly class is missing from train.
HmmBank fit_supervised(std::span<const Episode> train, const FeaturizerStats& stats,
                       double smoothing = 1.0);

double log_likelihood(const HmmModel& model, std::span<const DiscreteObservation> obs);

// Most probable state path. Ties go to the lower state index (safe).
std::vector<HiddenState> viterbi(const HmmModel& model, std::span<const DiscreteObservation> obs);

struct HmmDecision {
  AnomalyClass selected = AnomalyClass::Loc;
  std::array<double, 3> log_likelihoods{};  // LOC, DIS, UNB
  std::vector<AnomalyClass> labels;
};

// Picks the model with the highest likelihood (ties: LOC < DIS < UNB) and
// labels the sequence with its Viterbi path.
HmmDecision classify_detailed(const HmmBank& bank, std::span<const Observation> obs);
std::vector<AnomalyClass> classify_sequence(const HmmBank& bank, std::span<const Observation> obs);

}  // namespace anomid
