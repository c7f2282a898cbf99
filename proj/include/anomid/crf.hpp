#pragma once

// Linear-chain CRF over the four labels with indicator features:
//   START(y)            label of the first position
//   TRANS(prev, y)      all 16 label pairs
//   EMIT(y, channel, c) one per label and (channel, code) pair seen in training
// A position's score is the sum of the weights of its active features.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anomid/episode.hpp"
#include "anomid/features.hpp"
#include "anomid/lbfgs.hpp"

namespace anomid {

inline constexpr std::size_t kNumLabels = kNumClasses;

enum class CrfTemplate : std::uint8_t { Start = 0, Trans = 1, Emit = 2 };

struct CrfFeature {
  CrfTemplate tmpl = CrfTemplate::Start;
  AnomalyClass label = AnomalyClass::Safe;
  AnomalyClass prev = AnomalyClass::Safe;  // Trans only
  std::uint8_t channel = 0;                // Emit only
  std::uint8_t code = 0;                   // Emit only

  friend bool operator==(const CrfFeature&, const CrfFeature&) = default;
};

// "S|LOC", "T|SAFE|LOC", "E|LOC|laser|2"
std::string feature_identity(const CrfFeature& f);
// Throws DataError on a malformed identity.
CrfFeature parse_feature_identity(std::string_view s);

class CrfFeatureIndex {
 public:
  CrfFeatureIndex();  // START + TRANS only

  // Index ordering is canonical (START, TRANS, then EMIT by channel, code,
  // label), so it does not depend on the order of the input sequences.
  static CrfFeatureIndex build(std::span<const std::vector<DiscreteObservation>> sequences);
  // Throws DataError on duplicates, missing START/TRANS entries or out-of-range codes.
  static CrfFeatureIndex from_features(std::span<const CrfFeature> features);

  std::size_t size() const { return features_.size(); }
  const CrfFeature& feature(std::size_t j) const { return features_[j]; }
  const std::vector<CrfFeature>& features() const { return features_; }

  std::size_t start_index(AnomalyClass y) const { return index_of(y); }
  std::size_t trans_index(AnomalyClass prev, AnomalyClass y) const {
    return kNumLabels + index_of(prev) * kNumLabels + index_of(y);
  }
  // -1 when the feature is absent.
  std::int64_t emit_index(AnomalyClass y, std::size_t channel, int code) const;
  std::size_t num_emit() const { return features_.size() - kNumLabels - kNumLabels * kNumLabels; }

  friend bool operator==(const CrfFeatureIndex& a, const CrfFeatureIndex& b) {
    return a.features_ == b.features_;
  }

 private:
  void rebuild_lookup();

  std::vector<CrfFeature> features_;
  // emit_lookup_[channel][code * kNumLabels + label]
  std::array<std::vector<std::int64_t>, kNumDiscreteChannels> emit_lookup_;
};

struct CrfModel {
  CrfFeatureIndex index;
  std::vector<double> weights;
  FeaturizerStats stats;

  // Zero weights over the given index.
  static CrfModel zeros(CrfFeatureIndex index, FeaturizerStats stats = {});
};

// Throws DataError unless weights match the index size and are finite.
void validate(const CrfModel& model);

struct CrfSequence {
  std::vector<DiscreteObservation> obs;
  std::vector<AnomalyClass> labels;
};

std::vector<CrfSequence> make_sequences(std::span<const Episode> episodes, const FeaturizerStats& stats);

// Log-domain score of one position. prev is empty at the first position,
// where the START feature takes the place of TRANS.
double score_position(const CrfModel& model, std::optional<AnomalyClass> prev, AnomalyClass label,
                      const DiscreteObservation& x);

// Sum of position scores along a labelling.
double sequence_score(const CrfModel& model, std::span<const DiscreteObservation> obs,
                      std::span<const AnomalyClass> labels);

double log_partition(const CrfModel& model, std::span<const DiscreteObservation> obs);

struct NllResult {
  double value = 0.0;
  std::vector<double> gradient;
};

// -sum log P(y|x) + l2/2 |w|^2 and its exact gradient. Throws
// DivergenceError on non-finite intermediates.
NllResult nll_and_gradient(const CrfModel& model, std::span<const CrfSequence> batch, double l2);

// Viterbi argmax; ties resolve to the lower label.
std::vector<AnomalyClass> decode(const CrfModel& model, std::span<const DiscreteObservation> obs);
std::vector<AnomalyClass> decode(const CrfModel& model, std::span<const Observation> obs);

struct CrfLbfgsConfig {
  double l2 = 1e-2;
  LbfgsConfig lbfgs{};
};

struct CrfTrainReport {
  int iterations = 0;
  bool converged = false;
  bool warning = false;  // line search failed; weights are the best found
  std::vector<double> objective_history;
};

CrfModel train_lbfgs(std::span<const CrfSequence> train, const CrfLbfgsConfig& config,
                     CrfTrainReport* report = nullptr);
CrfModel train_lbfgs(std::span<const Episode> train, const FeaturizerStats& stats,
                     const CrfLbfgsConfig& config, CrfTrainReport* report = nullptr);

struct CrfArowConfig {
  double r = 1.0;
  int epochs = 20;
  std::uint64_t shuffle_seed = 1;
};

struct ArowState {
  std::vector<double> variance;  // diagonal, starts at 1
  int updates = 0;
};

// Online training: decode each episode, and when the decoded path differs
// from the gold one, apply a confidence-weighted update along the
// feature-count difference. state, when given, receives the final variances.
CrfModel train_arow(std::span<const CrfSequence> train, const CrfArowConfig& config,
                    ArowState* state = nullptr);
CrfModel train_arow(std::span<const Episode> train, const FeaturizerStats& stats,
                    const CrfArowConfig& config, ArowState* state = nullptr);

// One AROW step on a single sequence. Returns false when the decoded path
// already equals the gold labels (no change).
bool arow_update(CrfModel& model, ArowState& state, const CrfSequence& seq, double r);

}  // namespace anomid
