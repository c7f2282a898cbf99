#pragma once

// Scripted episode generator for the push, pick and tower-building scenarios
// with optional LOC / DIS / UNB injection.

#include <cstdint>
#include <string_view>
#include <vector>

#include "anomid/episode.hpp"

namespace anomid {

enum class ScenarioKind : std::uint8_t { PushObject = 0, PickObject = 1, BuildTower = 2 };
inline constexpr std::array<ScenarioKind, 3> kAllScenarioKinds = {
    ScenarioKind::PushObject, ScenarioKind::PickObject, ScenarioKind::BuildTower};

std::string_view to_string(ScenarioKind kind);
std::vector<ActionKind> scenario_plan(ScenarioKind kind);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::PickObject;
  AnomalyClass anomaly = AnomalyClass::Safe;
  std::uint64_t seed = 0;
  double noise_level = 1.0;
  int samples_per_phase = 8;
};

// Per-channel sensor noise standard deviations at noise_level = 1.
struct NoiseModel {
  static constexpr double kLaserStdM = 0.006;
  static constexpr double kGripperPositionStd = 3.0;
  static constexpr double kGripperForceStd = 3.0;
  static constexpr double kOffsetStdM = 0.004;
};

// UNB requires BuildTower; noise_level must be finite and >= 0; at least one
// sample per phase. Throws DataError otherwise.
void validate(const ScenarioSpec& spec);

// Deterministic in the spec. Anomalous episodes end with the action in which
// the anomaly is detected; safe episodes run the whole plan.
Episode generate_episode(const ScenarioSpec& spec);

// splitmix64 finalizer applied to master + (index + 1) * golden-ratio gamma.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct DatasetSpec {
  int n_dis = 49;
  int n_unb = 39;
  int n_loc = 32;
  int n_safe = 0;
  std::uint64_t seed = 1;
  double noise_level = 1.0;
  int samples_per_phase = 8;
};

// Episodes are emitted in blocks DIS, UNB, LOC, SAFE. UNB episodes are towers;
// the other classes cycle through push, pick and tower. Episode i of the
// dataset uses derive_seed(seed, i).
std::vector<Episode> generate_dataset(const DatasetSpec& spec);

}  // namespace anomid
