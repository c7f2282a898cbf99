#pragma once

// State-level and case-level scoring.

#include <array>
#include <cstdint>
#include <span>

#include "anomid/episode.hpp"

namespace anomid {

// counts[gold][predicted] over per-step labels.
struct StateConfusion {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(AnomalyClass gold, AnomalyClass predicted) { ++counts[index_of(gold)][index_of(predicted)]; }
  void add(std::span<const AnomalyClass> gold, std::span<const AnomalyClass> predicted);
  void merge(const StateConfusion& other);
  std::uint64_t total() const;
  std::uint64_t gold_count(AnomalyClass c) const;
  std::uint64_t predicted_count(AnomalyClass c) const;

  // Each row divided by its sum. A row with no gold samples stays all zero.
  std::array<std::array<double, kNumClasses>, kNumClasses> row_normalized() const;

  friend bool operator==(const StateConfusion&, const StateConfusion&) = default;
};

// Precision, recall and F are 0 when their denominator is 0.
struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

struct StateMetrics {
  std::array<ClassScore, kNumClasses> per_class{};
  ClassScore overall{};          // unweighted mean over all four classes
  ClassScore overall_anomaly{};  // unweighted mean over LOC, DIS, UNB
  double micro_f = 0.0;          // equals accuracy for single-label steps
};

ClassScore score_class(const StateConfusion& m, AnomalyClass c);
StateMetrics compute_metrics(const StateConfusion& m);

// Case-level counts: rows are gold LOC, DIS, UNB; columns predicted LOC,
// DIS, UNB, then a spill column for SAFE predictions.
struct CaseConfusion {
  static constexpr std::size_t kSpill = 3;
  std::array<std::array<std::uint64_t, 4>, 3> counts{};

  // Throws DataError when gold is SAFE.
  void add(AnomalyClass gold, AnomalyClass predicted);
  void merge(const CaseConfusion& other);
  std::uint64_t total() const;
  std::uint64_t row_total(AnomalyClass gold) const;
  std::uint64_t spill() const;
  // Fraction of the class's episodes classified correctly; 0 with no episodes.
  double accuracy(AnomalyClass gold) const;

  friend bool operator==(const CaseConfusion&, const CaseConfusion&) = default;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

}  // namespace anomid
