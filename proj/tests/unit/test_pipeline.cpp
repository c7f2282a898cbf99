#include <doctest.h>

#include <random>

#include "anomid/error.hpp"
#include "anomid/pipeline.hpp"
#include "anomid/simulator.hpp"

using namespace anomid;

namespace {

constexpr auto S = AnomalyClass::Safe;
constexpr auto L = AnomalyClass::Loc;
constexpr auto D = AnomalyClass::Dis;
constexpr auto U = AnomalyClass::Unb;

// Labels every step with a fixed class and remembers how much history it saw.
class FixedLabeler final : public Labeler {
 public:
  explicit FixedLabeler(AnomalyClass c) : c_(c) {}
  std::vector<AnomalyClass> label_sequence(std::span<const Observation> obs) const override {
    seen = obs.size();
    return std::vector<AnomalyClass>(obs.size(), c_);
  }
  std::string_view name() const override { return "fixed"; }
  mutable std::size_t seen = 0;

 private:
  AnomalyClass c_;
};

class ShortLabeler final : public Labeler {
 public:
  std::vector<AnomalyClass> label_sequence(std::span<const Observation> obs) const override {
    return std::vector<AnomalyClass>(obs.size() - 1, S);
  }
  std::string_view name() const override { return "short"; }
};

// Fires when the history reaches a given length; counts calls.
class CountingDetector final : public Detector {
 public:
  explicit CountingDetector(std::size_t at) : at_(at) {}
  bool fires(std::span<const Observation> history) override {
    ++calls;
    return history.size() == at_;
  }
  int calls = 0;

 private:
  std::size_t at_;
};

// Brute-force vote: the winner is the class with the most votes, scanning
// anomaly classes first in LOC, DIS, UNB order and SAFE last, and accepting a
// later class only with a strictly larger count.
AnomalyClass reference_vote(const std::vector<AnomalyClass>& labels) {
  std::array<int, kNumClasses> n{};
  for (auto l : labels) ++n[index_of(l)];
  AnomalyClass best = L;
  for (auto c : {L, D, U, S}) {
    if (n[index_of(c)] > n[index_of(best)]) best = c;
  }
  if (n[index_of(best)] == 0) return S;
  return best;
}

Observation at(int t, double laser) {
  Observation o;
  o.t = t;
  o.laser_distance_m = laser;
  o.target_existence = ExistenceBelief::Yes;
  return o;
}

}  // namespace

TEST_CASE("majority vote") {
  CHECK(majority_vote(std::vector{S, S, L, L, L}) == L);
  CHECK(majority_vote(std::vector{S, S, D, D}) == D);
  CHECK(majority_vote(std::vector{L, D}) == L);
  CHECK(majority_vote(std::vector{U, D}) == D);
  CHECK(majority_vote(std::vector{S, S, S, U, U}) == S);
  CHECK(majority_vote(std::vector{S}) == S);
  CHECK_THROWS_AS(majority_vote(std::vector<AnomalyClass>{}), DataError);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<AnomalyClass> labels(1 + rng() % 9);
    for (auto& l : labels) l = static_cast<AnomalyClass>(rng() % 4);
    const auto v = majority_vote(labels);
    CHECK(v == reference_vote(labels));
    std::shuffle(labels.begin(), labels.end(), rng);
    CHECK(majority_vote(labels) == v);
    const auto counts = vote_counts(labels);
    CHECK(counts[0] + counts[1] + counts[2] + counts[3] == labels.size());
  }
}

TEST_CASE("run_episode") {
  const auto loc = generate_episode({ScenarioKind::PickObject, AnomalyClass::Loc, 4});
  const auto safe = generate_episode({ScenarioKind::PickObject, AnomalyClass::Safe, 4});

  SUBCASE("no detection on a safe episode") {
    FixedLabeler lab(D);
    NeverDetector det;
    const auto r = run_episode(lab, det, safe);
    CHECK(lab.seen == 0);
    CHECK(r.final_class == S);
    CHECK_FALSE(r.detection_step.has_value());
    CHECK(r.labels.size() == safe.samples.size());
    for (auto l : r.labels) CHECK(l == S);
    CHECK(r.votes[index_of(S)] == safe.samples.size());
  }
  SUBCASE("detection at step zero labels exactly one observation") {
    FixedLabeler lab(U);
    ReplayDetector det(0);
    const auto r = run_episode(lab, det, loc);
    CHECK(lab.seen == 1);
    CHECK(r.labels == std::vector{U});
    CHECK(r.final_class == U);
    CHECK(r.detection_step == 0);
  }
  SUBCASE("the recorded detection step is replayed and later steps are not read") {
    FixedLabeler lab(L);
    CountingDetector det(static_cast<std::size_t>(*loc.detection_step) + 1);
    const auto r = run_episode(lab, det, loc);
    CHECK(det.calls == *loc.detection_step + 1);
    CHECK(lab.seen == static_cast<std::size_t>(*loc.detection_step) + 1);
    CHECK(r.final_class == L);
    CHECK(r.votes[index_of(L)] == lab.seen);
  }
  SUBCASE("a schedule past the end is rejected") {
    FixedLabeler lab(L);
    ReplayDetector det(static_cast<int>(loc.samples.size()));
    CHECK_THROWS_AS(run_episode(lab, det, loc), DataError);
  }
  SUBCASE("a labeler returning the wrong length is rejected") {
    ShortLabeler lab;
    ReplayDetector det(loc);
    CHECK_THROWS_AS(run_episode(lab, det, loc), DataError);
  }
}

TEST_CASE("fuse_stream") {
  SUBCASE("aligned streams pass through") {
    const auto ep = generate_episode({ScenarioKind::BuildTower, AnomalyClass::Unb, 2});
    std::vector<Observation> obs;
    for (const auto& s : ep.samples) obs.push_back(s.obs);
    CHECK(fuse_stream(to_streams(obs), obs.size()) == obs);
  }
  SUBCASE("sound events are held until the next one") {
    RawStreams rs;
    rs.sound = {{0.0, SoundClass::EgoNoise}, {0.35, SoundClass::Drop}};
    const auto out = fuse_stream(rs, 5);
    for (int t = 0; t < 4; ++t) CHECK(out[t].sound == SoundClass::EgoNoise);
    CHECK(out[4].sound == SoundClass::Drop);
  }
  SUBCASE("missing modalities take their defaults") {
    RawStreams rs;
    rs.laser_distance_m = {{0.0, 0.3}, {0.2, 0.1}};
    const auto out = fuse_stream(rs, 4);
    REQUIRE(out.size() == 4);
    CHECK(out[0].laser_distance_m == 0.3);
    CHECK(out[1].laser_distance_m == 0.3);
    CHECK(out[2].laser_distance_m == 0.1);
    for (int t = 0; t < 4; ++t) {
      CHECK(out[t].t == t);
      CHECK(out[t].sound == SoundClass::NoSound);
      CHECK(out[t].target_existence == ExistenceBelief::Unknown);
      CHECK(out[t].gripper_force == 0.0);
      CHECK(out[t].action_phase == ActionPhase{});
    }
  }
  SUBCASE("offsets are zeroed while existence is unknown") {
    RawStreams rs;
    rs.target_offset_m = {{0.0, 0.05}};
    rs.target_existence = {{0.0, ExistenceBelief::Unknown}, {0.1, ExistenceBelief::Yes}};
    const auto out = fuse_stream(rs, 2);
    CHECK(out[0].target_offset_m == 0.0);
    CHECK(out[1].target_offset_m == 0.05);
  }
  SUBCASE("a reading within tolerance of a grid point counts for that step") {
    RawStreams rs;
    rs.gripper_force = {{0.0, 1.0}, {0.3 + 1e-12, 9.0}};
    CHECK(fuse_stream(rs, 4)[3].gripper_force == 9.0);
  }
  SUBCASE("unsorted or non-finite streams are rejected") {
    RawStreams rs;
    rs.laser_distance_m = {{0.2, 0.1}, {0.1, 0.2}};
    CHECK_THROWS_AS(fuse_stream(rs, 3), DataError);
    RawStreams nan;
    nan.gripper_force = {{0.0, std::nan("")}};
    CHECK_THROWS_AS(fuse_stream(nan, 3), DataError);
  }
}

TEST_CASE("built-in labelers return one label per observation") {
  const auto data = generate_dataset({3, 3, 3, 0, 8});
  const auto stats = fit_stats(data);
  std::vector<Observation> obs;
  for (const auto& s : data[0].samples) obs.push_back(s.obs);
  const HmmLabeler hmm(fit_supervised(data, stats));
  const CrfLabeler crf(CrfModel::zeros(CrfFeatureIndex{}, stats), "crf-arow");
  const LstmLabeler lstm(LstmModel{LstmParams(4), stats});
  for (const Labeler* l : std::initializer_list<const Labeler*>{&hmm, &crf, &lstm}) {
    CHECK(l->label_sequence(obs).size() == obs.size());
  }
  CHECK(crf.name() == "crf-arow");
  for (auto y : crf.label_sequence(obs)) CHECK(y == S);
}
