#include <doctest.h>

#include <random>

#include "anomid/error.hpp"
#include "anomid/metrics.hpp"

using namespace anomid;

namespace {

// Per-class precision/recall/F counted straight from label pairs.
ClassScore tally(const std::vector<AnomalyClass>& gold, const std::vector<AnomalyClass>& pred, AnomalyClass c) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i] == c && gold[i] == c) ++tp;
    if (pred[i] == c && gold[i] != c) ++fp;
    if (pred[i] != c && gold[i] == c) ++fn;
  }
  ClassScore s;
  s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  s.f = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace

TEST_CASE("state metrics agree with a direct tally") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<AnomalyClass> gold(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = static_cast<AnomalyClass>(rng() % 4);
      pred[i] = rng() % 3 == 0 ? gold[i] : static_cast<AnomalyClass>(rng() % 4);
    }
    StateConfusion m;
    m.add(gold, pred);
    CHECK(m.total() == n);
    const auto met = compute_metrics(m);
    double sum_f = 0.0, sum_anom_f = 0.0, correct = 0.0;
    for (auto c : kAllClasses) {
      const auto ref = tally(gold, pred, c);
      CHECK(met.per_class[index_of(c)].precision == doctest::Approx(ref.precision));
      CHECK(met.per_class[index_of(c)].recall == doctest::Approx(ref.recall));
      CHECK(met.per_class[index_of(c)].f == doctest::Approx(ref.f));
      sum_f += ref.f;
      if (is_anomaly(c)) sum_anom_f += ref.f;
    }
    for (std::size_t i = 0; i < n; ++i) correct += gold[i] == pred[i];
    CHECK(met.overall.f == doctest::Approx(sum_f / 4.0));
    CHECK(met.overall_anomaly.f == doctest::Approx(sum_anom_f / 3.0));
    CHECK(met.micro_f == doctest::Approx(correct / static_cast<double>(n)));
  }
}

TEST_CASE("zero denominators give zero scores") {
  StateConfusion m;
  auto s = score_class(m, AnomalyClass::Loc);
  CHECK(s.precision == 0.0);
  CHECK(s.recall == 0.0);
  CHECK(s.f == 0.0);
  m.add(AnomalyClass::Safe, AnomalyClass::Safe);
  s = score_class(m, AnomalyClass::Dis);
  CHECK(s.f == 0.0);
  CHECK(compute_metrics(m).per_class[0].f == 1.0);
  const auto rows = m.row_normalized();
  CHECK(rows[0][0] == 1.0);
  for (double v : rows[2]) CHECK(v == 0.0);
}

TEST_CASE("merging confusions adds counts") {
  StateConfusion a, b;
  a.add(AnomalyClass::Loc, AnomalyClass::Dis);
  b.add(AnomalyClass::Loc, AnomalyClass::Dis);
  b.add(AnomalyClass::Unb, AnomalyClass::Unb);
  a.merge(b);
  CHECK(a.counts[1][2] == 2);
  CHECK(a.gold_count(AnomalyClass::Loc) == 2);
  CHECK(a.predicted_count(AnomalyClass::Unb) == 1);
  CHECK(a.total() == 3);
}

TEST_CASE("case confusion") {
  CaseConfusion c;
  for (auto k : kAnomalyClasses) c.add(k, k);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(c.counts[i][j] == (i == j ? 1u : 0u));
  }
  c.add(AnomalyClass::Loc, AnomalyClass::Dis);
  CHECK(c.counts[0][1] == 1);
  c.add(AnomalyClass::Unb, AnomalyClass::Safe);
  CHECK(c.spill() == 1);
  CHECK(c.counts[2][CaseConfusion::kSpill] == 1);
  CHECK(c.row_total(AnomalyClass::Loc) == 2);
  CHECK(c.accuracy(AnomalyClass::Loc) == 0.5);
  CHECK(c.accuracy(AnomalyClass::Dis) == 1.0);
  CHECK(c.total() == 5);
  CHECK_THROWS_AS(c.add(AnomalyClass::Safe, AnomalyClass::Loc), DataError);
  CHECK(CaseConfusion{}.accuracy(AnomalyClass::Dis) == 0.0);
}

TEST_CASE("population mean and standard deviation") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const auto ms = mean_std(v);
  CHECK(ms.mean == 5.0);
  CHECK(ms.std == 2.0);
  CHECK(mean_std(std::vector{0.3}).std == 0.0);
  CHECK(mean_std(std::vector<double>{}).mean == 0.0);
}
