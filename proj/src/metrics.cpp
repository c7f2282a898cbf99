#include "anomid/metrics.hpp"

#include <cmath>

#include "anomid/error.hpp"

namespace anomid {

void StateConfusion::add(std::span<const AnomalyClass> gold, std::span<const AnomalyClass> predicted) {
  if (gold.size() != predicted.size()) throw DataError("confusion: gold and predicted lengths differ");
  for (std::size_t i = 0; i < gold.size(); ++i) add(gold[i], predicted[i]);
}

void StateConfusion::merge(const StateConfusion& other) {
  for (std::size_t g = 0; g < kNumClasses; ++g) {
    for (std::size_t p = 0; p < kNumClasses; ++p) counts[g][p] += other.counts[g][p];
  }
}

std::uint64_t StateConfusion::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

std::uint64_t StateConfusion::gold_count(AnomalyClass c) const {
  std::uint64_t n = 0;
  for (auto v : counts[index_of(c)]) n += v;
  return n;
}

std::uint64_t StateConfusion::predicted_count(AnomalyClass c) const {
  std::uint64_t n = 0;
  for (const auto& row : counts) n += row[index_of(c)];
  return n;
}

std::array<std::array<double, kNumClasses>, kNumClasses> StateConfusion::row_normalized() const {
  std::array<std::array<double, kNumClasses>, kNumClasses> out{};
  for (std::size_t g = 0; g < kNumClasses; ++g) {
    const auto n = gold_count(static_cast<AnomalyClass>(g));
    if (n == 0) continue;
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      out[g][p] = static_cast<double>(counts[g][p]) / static_cast<double>(n);
    }
  }
  return out;
}

ClassScore score_class(const StateConfusion& m, AnomalyClass c) {
  const auto tp = static_cast<double>(m.counts[index_of(c)][index_of(c)]);
  const auto pred = static_cast<double>(m.predicted_count(c));
  const auto gold = static_cast<double>(m.gold_count(c));
  ClassScore s;
  s.precision = pred > 0 ? tp / pred : 0.0;
  s.recall = gold > 0 ? tp / gold : 0.0;
  s.f = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

StateMetrics compute_metrics(const StateConfusion& m) {
  StateMetrics out;
  for (auto c : kAllClasses) {
    const auto s = score_class(m, c);
    out.per_class[index_of(c)] = s;
    out.overall.precision += s.precision / 4.0;
    out.overall.recall += s.recall / 4.0;
    out.overall.f += s.f / 4.0;
    if (is_anomaly(c)) {
      out.overall_anomaly.precision += s.precision / 3.0;
      out.overall_anomaly.recall += s.recall / 3.0;
      out.overall_anomaly.f += s.f / 3.0;
    }
  }
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) correct += m.counts[c][c];
  const auto total = m.total();
  out.micro_f = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return out;
}

void CaseConfusion::add(AnomalyClass gold, AnomalyClass predicted) {
  if (!is_anomaly(gold)) throw DataError("case confusion: gold class must be an anomaly");
  const std::size_t col = is_anomaly(predicted) ? index_of(predicted) - 1 : kSpill;
  ++counts[index_of(gold) - 1][col];
}

void CaseConfusion::merge(const CaseConfusion& other) {
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t p = 0; p < 4; ++p) counts[g][p] += other.counts[g][p];
  }
}

std::uint64_t CaseConfusion::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

std::uint64_t CaseConfusion::row_total(AnomalyClass gold) const {
  if (!is_anomaly(gold)) return 0;
  std::uint64_t n = 0;
  for (auto c : counts[index_of(gold) - 1]) n += c;
  return n;
}

std::uint64_t CaseConfusion::spill() const {
  std::uint64_t n = 0;
  for (const auto& row : counts) n += row[kSpill];
  return n;
}

double CaseConfusion::accuracy(AnomalyClass gold) const {
  const auto n = row_total(gold);
  if (n == 0) return 0.0;
  const std::size_t r = index_of(gold) - 1;
  return static_cast<double>(counts[r][r]) / static_cast<double>(n);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size()));
  return out;
}

}  // namespace anomid
