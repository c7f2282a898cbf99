#include <doctest.h>

#include <algorithm>
#include <random>

#include "anomid/error.hpp"
#include "anomid/features.hpp"
#include "anomid/simulator.hpp"

using namespace anomid;

namespace {

// Type-7 percentile straight from the definition: h = (n-1) p, interpolate
// between the floor(h)-th and ceil(h)-th order statistics.
double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

int brute_bin(double x, const ChannelStats& ch) {
  if (ch.constant) return 0;
  int b = 0;
  for (double c : ch.cuts) {
    if (x >= c) ++b;
  }
  return b;
}

Observation obs_with(double laser, double grip, double force, double offset) {
  Observation o;
  o.laser_distance_m = laser;
  o.gripper_position = grip;
  o.gripper_force = force;
  o.target_existence = ExistenceBelief::Yes;
  o.target_offset_m = offset;
  return o;
}

Episode episode_of(std::vector<Observation> obs) {
  Episode ep;
  ep.id = "f";
  for (std::size_t t = 0; t < obs.size(); ++t) {
    obs[t].t = static_cast<int>(t);
    ep.samples.push_back({obs[t], AnomalyClass::Safe});
  }
  return ep;
}

}  // namespace

TEST_CASE("quantile cuts on four evenly spaced values") {
  const auto ch = fit_channel({0.3, 0.0, 0.2, 0.1});
  CHECK_FALSE(ch.constant);
  CHECK(ch.cuts[0] == doctest::Approx(0.075));
  CHECK(ch.cuts[1] == doctest::Approx(0.15));
  CHECK(ch.cuts[2] == doctest::Approx(0.225));
  CHECK(ch.min == 0.0);
  CHECK(ch.max == 0.3);
}

TEST_CASE("quantile cuts match the percentile definition on random data") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(5 + rng() % 200);
    for (auto& x : v) x = nd(rng);
    const auto ch = fit_channel(v);
    for (int q = 0; q < 3; ++q) CHECK(ch.cuts[q] == doctest::Approx(percentile(v, 0.25 * (q + 1))).epsilon(1e-12));
  }
}

TEST_CASE("tied values fall back to percentiles of the distinct values") {
  // 90% zeros: raw percentiles are all 0.
  std::vector<double> v(90, 0.0);
  for (int i = 1; i <= 10; ++i) v.push_back(i);
  const auto ch = fit_channel(v);
  std::vector<double> distinct{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  for (int q = 0; q < 3; ++q) CHECK(ch.cuts[q] == doctest::Approx(percentile(distinct, 0.25 * (q + 1))));
  CHECK(ch.cuts[0] < ch.cuts[1]);
  CHECK(ch.cuts[1] < ch.cuts[2]);
}

TEST_CASE("constant channel") {
  std::vector<Observation> obs(6, obs_with(0.2, 40, 10, 0.01));
  const auto eps = std::vector{episode_of(obs)};
  const auto stats = fit_stats(eps);
  for (const auto& ch : stats.channels) CHECK(ch.constant);
  const auto v = encode(obs[0], stats);
  CHECK(v[0] == 0.5);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 0.5);
  const auto d = discretize(obs[0], stats);
  for (int c = 0; c < 4; ++c) CHECK(d.codes[c] == 0);
}

TEST_CASE("continuous entries are min-max scaled and clipped") {
  const auto eps = std::vector{episode_of({obs_with(0.0, 0, 0, 0), obs_with(0.4, 100, 100, 0)})};
  const auto stats = fit_stats(eps);
  CHECK(encode(obs_with(0.2, 50, 50, 0), stats)[2] == doctest::Approx(0.5));
  CHECK(encode(obs_with(0.2, 100, 50, 0), stats)[1] == doctest::Approx(1.0));
  CHECK(encode(obs_with(0.1, 50, 50, 0), stats)[0] == doctest::Approx(0.25));
  // Outside the training range.
  auto beyond = obs_with(0.2, 50, 50, 0);
  beyond.laser_distance_m = 0.5;
  CHECK(encode(beyond, stats)[0] == 1.0);
  CHECK(encode(obs_with(0.2, 50, 50, 0.15), stats)[kOffsetSlot] == doctest::Approx(0.5));
  CHECK(encode(obs_with(0.2, 50, 50, -1.0), stats)[kOffsetSlot] == -1.0);
}

TEST_CASE("one-hot blocks") {
  const auto eps = std::vector{episode_of({obs_with(0.0, 0, 0, 0), obs_with(0.4, 100, 100, 0)})};
  const auto stats = fit_stats(eps);
  auto o = obs_with(0.2, 50, 50, 0);
  o.sound = SoundClass::Drop;
  o.target_existence = ExistenceBelief::Unknown;
  o.action_phase = {ActionKind::Push, 2};
  const auto v = encode(o, stats);
  CHECK(v.size() == 43);
  CHECK(v[kSoundSlot] == 0.0);
  CHECK(v[kSoundSlot + 1] == 1.0);
  CHECK(v[kSoundSlot + 2] == 0.0);
  CHECK(v[kExistenceSlot] == 0.0);
  CHECK(v[kExistenceSlot + 1] == 0.0);
  CHECK(v[kExistenceSlot + 2] == 1.0);
  double phase_sum = 0.0;
  for (std::size_t i = kPhaseSlot; i < kFeatureWidth; ++i) phase_sum += v[i];
  CHECK(phase_sum == 1.0);
  CHECK(v[kPhaseSlot + o.action_phase.global_index()] == 1.0);
}

TEST_CASE("bins are half-open") {
  const auto ch = fit_channel({0.0, 0.1, 0.2, 0.3});
  CHECK(bin_of(-1.0, ch) == 0);
  CHECK(bin_of(5.0, ch) == 3);
  CHECK(bin_of(ch.cuts[0], ch) == 1);
  CHECK(bin_of(ch.cuts[1], ch) == 2);
  CHECK(bin_of(ch.cuts[2], ch) == 3);
  CHECK(bin_of(std::nextafter(ch.cuts[0], -1.0), ch) == 0);
}

TEST_CASE("discretizing a simulated episode matches a brute-force binner") {
  const auto eps = generate_dataset({5, 5, 5, 5, 3});
  const auto stats = fit_stats(eps);
  for (const auto& ep : eps) {
    for (const auto& s : ep.samples) {
      const auto d = discretize(s.obs, stats);
      for (std::size_t c = 0; c < kNumContinuous; ++c) {
        CHECK(d.codes[c] == brute_bin(continuous_value(s.obs, static_cast<ContinuousChannel>(c)), stats.channels[c]));
      }
      CHECK(d.codes[4] == static_cast<int>(s.obs.sound));
      CHECK(d.codes[5] == static_cast<int>(s.obs.target_existence));
      CHECK(d.codes[6] == static_cast<int>(s.obs.action_phase.global_index()));
    }
  }
}

TEST_CASE("fitting on nothing throws") {
  CHECK_THROWS_AS(fit_stats(std::span<const Episode>{}), DataError);
  CHECK_THROWS_AS(fit_channel({}), DataError);
}
