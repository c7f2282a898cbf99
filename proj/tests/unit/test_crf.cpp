#include <doctest.h>

#include <algorithm>

#include "anomid/crf.hpp"
#include "anomid/error.hpp"
#include "anomid/simulator.hpp"
#include "oracles.hpp"

using namespace anomid;

namespace {

// All channels share one code except the phase channel.
DiscreteObservation with_phase(int phase) {
  DiscreteObservation x;
  x.codes[6] = phase;
  return x;
}

CrfSequence constant_sequence(int phase, AnomalyClass y, std::size_t n) {
  CrfSequence s;
  for (std::size_t t = 0; t < n; ++t) {
    s.obs.push_back(with_phase(phase));
    s.labels.push_back(y);
  }
  return s;
}

std::vector<std::vector<DiscreteObservation>> single(const std::vector<DiscreteObservation>& obs) { return {obs}; }

std::vector<std::vector<DiscreteObservation>> obs_only(std::span<const CrfSequence> seqs) {
  std::vector<std::vector<DiscreteObservation>> out;
  for (const auto& s : seqs) out.push_back(s.obs);
  return out;
}

}  // namespace

TEST_CASE("feature index layout") {
  std::mt19937_64 rng(1);
  const std::vector<std::vector<DiscreteObservation>> seqs{oracle::random_codes(rng, 30)};
  const auto idx = CrfFeatureIndex::build(seqs);
  for (auto y : kAllClasses) {
    CHECK(idx.feature(idx.start_index(y)) == CrfFeature{CrfTemplate::Start, y});
    for (auto p : kAllClasses) CHECK(idx.feature(idx.trans_index(p, y)) == CrfFeature{CrfTemplate::Trans, y, p});
  }
  std::size_t distinct = 0;
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    for (int code = 0; code < static_cast<int>(kChannelCardinality[c]); ++code) {
      const bool seen = std::any_of(seqs[0].begin(), seqs[0].end(), [&](const auto& x) { return x.codes[c] == code; });
      distinct += seen;
      for (auto y : kAllClasses) {
        const auto j = idx.emit_index(y, c, code);
        CHECK((j >= 0) == seen);
        if (j >= 0) {
          const auto& f = idx.feature(static_cast<std::size_t>(j));
          CHECK(f.tmpl == CrfTemplate::Emit);
          CHECK(f.label == y);
          CHECK(f.channel == c);
          CHECK(f.code == code);
        }
      }
    }
  }
  CHECK(idx.num_emit() == distinct * kNumLabels);
  CHECK(idx.emit_index(AnomalyClass::Safe, 6, 99) == -1);
}

TEST_CASE("index is independent of sequence order") {
  std::mt19937_64 rng(2);
  std::vector<std::vector<DiscreteObservation>> seqs;
  for (int i = 0; i < 6; ++i) seqs.push_back(oracle::random_codes(rng, 1 + i));
  const auto a = CrfFeatureIndex::build(seqs);
  std::reverse(seqs.begin(), seqs.end());
  std::shuffle(seqs.begin(), seqs.end(), rng);
  CHECK(CrfFeatureIndex::build(seqs) == a);
}

TEST_CASE("feature identities round-trip") {
  std::mt19937_64 rng(3);
  const auto idx = CrfFeatureIndex::build(single(oracle::random_codes(rng, 40)));
  for (const auto& f : idx.features()) CHECK(parse_feature_identity(feature_identity(f)) == f);
  CHECK(feature_identity({CrfTemplate::Start, AnomalyClass::Loc}) == "S|LOC");
  CHECK(feature_identity({CrfTemplate::Trans, AnomalyClass::Loc, AnomalyClass::Safe}) == "T|SAFE|LOC");
  CHECK(feature_identity({CrfTemplate::Emit, AnomalyClass::Loc, AnomalyClass::Safe, 0, 2}) == "E|LOC|laser|2");
  CHECK(CrfFeatureIndex::from_features(idx.features()) == idx);
  for (const char* bad : {"", "S", "S|XYZ", "T|SAFE", "E|LOC|laser", "E|LOC|laser|9", "E|LOC|nose|1", "Q|LOC"}) {
    CHECK_THROWS_AS(parse_feature_identity(bad), DataError);
  }
  auto dup = idx.features();
  dup.push_back(dup.back());
  CHECK_THROWS_AS(CrfFeatureIndex::from_features(dup), DataError);
  auto missing = idx.features();
  missing.erase(missing.begin() + 5);
  CHECK_THROWS_AS(CrfFeatureIndex::from_features(missing), DataError);
}

TEST_CASE("position scores") {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_code(rng);
  auto m = CrfModel::zeros(CrfFeatureIndex::build(single(std::vector{x})));

  for (auto p : kAllClasses) {
    for (auto y : kAllClasses) CHECK(score_position(m, p, y, x) == 0.0);
  }
  m.weights[m.index.trans_index(AnomalyClass::Safe, AnomalyClass::Loc)] = 2.0;
  CHECK(score_position(m, AnomalyClass::Safe, AnomalyClass::Loc, x) == 2.0);
  CHECK(score_position(m, AnomalyClass::Safe, AnomalyClass::Dis, x) == 0.0);
  CHECK(score_position(m, std::nullopt, AnomalyClass::Loc, x) == 0.0);

  const auto rm = oracle::random_crf(rng, 3, 5, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto obs = oracle::random_codes(rng, 1 + trial % 6);
    const auto y = oracle::random_labels(rng, obs.size());
    CHECK(sequence_score(rm, obs, y) == doctest::Approx(oracle::crf_scan_score(rm, obs, y)).epsilon(1e-12));
  }
}

TEST_CASE("partition function and decoding agree with enumeration") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = oracle::random_crf(rng, 4, 6, 1.5);
    const auto obs = oracle::random_codes(rng, 1 + trial % 5);
    const auto brute = oracle::crf_brute_force(m, obs);
    CHECK(oracle::relative_error(log_partition(m, obs), brute.log_z) < 1e-9);
    CHECK(brute.total_probability == doctest::Approx(1.0).epsilon(1e-9));
    const auto d = decode(m, obs);
    CHECK(sequence_score(m, obs, d) == doctest::Approx(brute.max_score).epsilon(1e-12));
    CHECK(d == brute.argmax);
  }
}

TEST_CASE("zero weights") {
  std::mt19937_64 rng(6);
  const auto obs = oracle::random_codes(rng, 5);
  const auto m = CrfModel::zeros(CrfFeatureIndex::build(single(obs)));
  CHECK(log_partition(m, obs) == doctest::Approx(5.0 * std::log(4.0)));
  for (auto y : decode(m, std::span<const DiscreteObservation>(obs))) CHECK(y == AnomalyClass::Safe);
  CHECK_THROWS_AS(log_partition(m, {}), DataError);
  CHECK_THROWS_AS(decode(m, std::span<const DiscreteObservation>{}), DataError);
}

TEST_CASE("NLL of a single position under zero weights") {
  std::mt19937_64 rng(7);
  const CrfSequence seq{{oracle::random_code(rng)}, {AnomalyClass::Dis}};
  const auto m = CrfModel::zeros(CrfFeatureIndex::build(single(seq.obs)));
  const auto r = nll_and_gradient(m, std::vector{seq}, 0.0);
  CHECK(r.value == doctest::Approx(std::log(4.0)));
  for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
    for (auto y : kAllClasses) {
      const auto j = m.index.emit_index(y, c, seq.obs[0].codes[c]);
      REQUIRE(j >= 0);
      CHECK(r.gradient[static_cast<std::size_t>(j)] == doctest::Approx(y == AnomalyClass::Dis ? 0.25 - 1.0 : 0.25));
    }
  }
  CHECK(r.gradient[m.index.start_index(AnomalyClass::Dis)] == doctest::Approx(-0.75));
  for (auto p : kAllClasses) {
    for (auto y : kAllClasses) CHECK(r.gradient[m.index.trans_index(p, y)] == 0.0);
  }
}

TEST_CASE("NLL gradient matches finite differences") {
  std::mt19937_64 rng(8);
  for (double l2 : {0.0, 0.3}) {
    std::vector<CrfSequence> batch;
    for (int i = 0; i < 2; ++i) batch.push_back({oracle::random_codes(rng, 4), oracle::random_labels(rng, 4)});
    auto m = CrfModel::zeros(CrfFeatureIndex::build(obs_only(batch)));
    for (auto& w : m.weights) w = oracle::uniform(rng, -1.0, 1.0);
    const auto r = nll_and_gradient(m, batch, l2);
    auto f = [&](const std::vector<double>& w) {
      auto mm = m;
      mm.weights = w;
      return nll_and_gradient(mm, batch, l2).value;
    };
    const auto coords = oracle::sample_coords(rng, m.weights.size(), 20);
    CHECK(oracle::max_fd_error(f, m.weights, r.gradient, coords) < 1e-6);
  }
}

TEST_CASE("a duplicated episode doubles NLL and gradient") {
  std::mt19937_64 rng(9);
  const CrfSequence seq{oracle::random_codes(rng, 5), oracle::random_labels(rng, 5)};
  auto m = CrfModel::zeros(CrfFeatureIndex::build(single(seq.obs)));
  for (auto& w : m.weights) w = oracle::uniform(rng, -1.0, 1.0);
  const auto one = nll_and_gradient(m, std::vector{seq}, 0.0);
  const auto two = nll_and_gradient(m, std::vector{seq, seq}, 0.0);
  CHECK(two.value == doctest::Approx(2.0 * one.value));
  for (std::size_t j = 0; j < m.weights.size(); ++j) CHECK(two.gradient[j] == doctest::Approx(2.0 * one.gradient[j]));
}

TEST_CASE("L-BFGS training") {
  std::vector<CrfSequence> toy{constant_sequence(3, AnomalyClass::Safe, 4), constant_sequence(7, AnomalyClass::Loc, 3)};
  toy[1].labels[0] = AnomalyClass::Safe;
  CrfTrainReport report;
  const auto m = train_lbfgs(toy, CrfLbfgsConfig{}, &report);
  REQUIRE(report.objective_history.size() >= 2);
  for (std::size_t i = 1; i < report.objective_history.size(); ++i) {
    CHECK(report.objective_history[i] < report.objective_history[i - 1]);
  }
  CHECK(report.converged);
  CHECK_FALSE(report.warning);
  for (const auto& s : toy) CHECK(decode(m, std::span<const DiscreteObservation>(s.obs)) == s.labels);
  CHECK_THROWS_AS(train_lbfgs(std::span<const CrfSequence>{}, CrfLbfgsConfig{}), DataError);
}

TEST_CASE("L-BFGS on simulated episodes ends below the starting objective") {
  const auto data = generate_dataset({4, 4, 4, 0, 6});
  const auto stats = fit_stats(data);
  CrfTrainReport report;
  CrfLbfgsConfig cfg;
  cfg.lbfgs.max_iters = 40;
  const auto m = train_lbfgs(data, stats, cfg, &report);
  CHECK(m.stats == stats);
  validate(m);
  CHECK(report.objective_history.back() < report.objective_history.front());
}

TEST_CASE("AROW") {
  SUBCASE("a correctly decoded episode leaves the model untouched") {
    const auto seq = constant_sequence(2, AnomalyClass::Safe, 3);
    auto m = CrfModel::zeros(CrfFeatureIndex::build(single(seq.obs)));
    ArowState st;
    const auto before = m.weights;
    CHECK_FALSE(arow_update(m, st, seq, 1.0));
    CHECK(m.weights == before);
    CHECK(st.updates == 0);
  }
  SUBCASE("variances never increase") {
    std::mt19937_64 rng(10);
    std::vector<CrfSequence> seqs;
    for (int i = 0; i < 8; ++i) seqs.push_back({oracle::random_codes(rng, 6), oracle::random_labels(rng, 6)});
    auto m = CrfModel::zeros(CrfFeatureIndex::build(obs_only(seqs)));
    ArowState st;
    st.variance.assign(m.weights.size(), 1.0);
    for (int pass = 0; pass < 5; ++pass) {
      for (const auto& s : seqs) {
        const auto before = st.variance;
        arow_update(m, st, s, 0.5);
        for (std::size_t j = 0; j < before.size(); ++j) {
          CHECK(st.variance[j] <= before[j]);
          CHECK(st.variance[j] > 0.0);
        }
      }
    }
    CHECK(st.updates > 0);
  }
  SUBCASE("separable toy set is fitted within five epochs") {
    // The phase code alone identifies the class.
    std::vector<CrfSequence> toy;
    for (int i = 0; i < 4; ++i) {
      toy.push_back(constant_sequence(1, AnomalyClass::Safe, 3 + i));
      toy.push_back(constant_sequence(5, AnomalyClass::Unb, 2 + i));
    }
    CrfArowConfig cfg;
    cfg.epochs = 5;
    const auto m = train_arow(toy, cfg);
    for (const auto& s : toy) CHECK(decode(m, std::span<const DiscreteObservation>(s.obs)) == s.labels);
  }
  SUBCASE("deterministic in the shuffle seed") {
    const auto data = generate_dataset({3, 3, 3, 0, 2});
    const auto stats = fit_stats(data);
    CrfArowConfig cfg;
    cfg.epochs = 3;
    CHECK(train_arow(data, stats, cfg).weights == train_arow(data, stats, cfg).weights);
  }
  CHECK_THROWS_AS(train_arow(std::span<const CrfSequence>{}, CrfArowConfig{}), DataError);
}

TEST_CASE("validate rejects bad weights") {
  auto m = CrfModel::zeros(CrfFeatureIndex{});
  validate(m);
  m.weights.push_back(0.0);
  CHECK_THROWS_AS(validate(m), DataError);
  m.weights.pop_back();
  m.weights[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate(m), DataError);
}
