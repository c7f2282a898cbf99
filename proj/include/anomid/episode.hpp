#pragma once

// Shared data model: labels, sensor observations and labeled episodes.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace anomid {

enum class AnomalyClass : std::uint8_t { Safe = 0, Loc = 1, Dis = 2, Unb = 3 };
inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<AnomalyClass, kNumClasses> kAllClasses = {
    AnomalyClass::Safe, AnomalyClass::Loc, AnomalyClass::Dis, AnomalyClass::Unb};
inline constexpr std::array<AnomalyClass, 3> kAnomalyClasses = {
    AnomalyClass::Loc, AnomalyClass::Dis, AnomalyClass::Unb};

constexpr std::size_t index_of(AnomalyClass c) { return static_cast<std::size_t>(c); }
constexpr bool is_anomaly(AnomalyClass c) { return c != AnomalyClass::Safe; }

enum class ActionKind : std::uint8_t {
  MoveTowardsObject = 0,
  MoveToLocation = 1,
  PickUp = 2,
  PutDown = 3,
  PutDownOn = 4,
  Push = 5,
};
inline constexpr std::size_t kNumActionKinds = 6;

constexpr int phase_count(ActionKind a) {
  switch (a) {
    case ActionKind::MoveTowardsObject:
    case ActionKind::MoveToLocation:
    case ActionKind::PickUp:
      return 5;
    case ActionKind::PutDown:
    case ActionKind::PutDownOn:
    case ActionKind::Push:
      return 6;
  }
  return 0;
}

// Size of the global (action, phase) vocabulary: 5+5+5+6+6+6.
inline constexpr std::size_t kNumPhases = 33;

struct ActionPhase {
  ActionKind action = ActionKind::MoveTowardsObject;
  int phase_index = 0;

  // Dense index into the 33-entry vocabulary, actions in declaration order.
  std::size_t global_index() const;
  static ActionPhase from_global_index(std::size_t index);

  friend bool operator==(const ActionPhase&, const ActionPhase&) = default;
};

enum class SoundClass : std::uint8_t { NoSound = 0, Drop = 1, EgoNoise = 2 };
inline constexpr std::size_t kNumSoundClasses = 3;

enum class ExistenceBelief : std::uint8_t { Yes = 0, No = 1, Unknown = 2 };
inline constexpr std::size_t kNumExistence = 3;

// Saturation range of the gripper-mounted range sensor.
inline constexpr double kLaserMaxRangeM = 0.4;
// Nominal sampling rate. Metadata only; time is always an integer step.
inline constexpr double kSampleRateHz = 10.0;

struct Observation {
  int t = 0;
  double laser_distance_m = 0.0;
  double gripper_position = 0.0;  // 0 closed .. 100 fully open (8 cm)
  double gripper_force = 0.0;     // 0 .. 100, normalized from 0..35 N
  SoundClass sound = SoundClass::NoSound;
  ExistenceBelief target_existence = ExistenceBelief::Unknown;
  double target_offset_m = 0.0;
  ActionPhase action_phase;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Sample {
  Observation obs;
  AnomalyClass label = AnomalyClass::Safe;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Episode {
  std::string id;
  std::vector<ActionKind> plan;
  std::vector<Sample> samples;
  std::optional<int> anomaly_onset;
  std::optional<int> detection_step;
  AnomalyClass case_label = AnomalyClass::Safe;

  std::size_t size() const { return samples.size(); }
  std::vector<Observation> observations() const;
  std::vector<AnomalyClass> labels() const;

  friend bool operator==(const Episode&, const Episode&) = default;
};

// Returns a description of the first violated invariant, or nullopt.
std::optional<std::string> find_violation(const Observation& obs);
std::optional<std::string> find_violation(const Episode& episode);

// Throws DataError naming the episode and the violated invariant.
void validate(const Episode& episode);

std::string_view to_string(AnomalyClass c);
std::string_view to_string(ActionKind a);
std::string_view to_string(SoundClass s);
std::string_view to_string(ExistenceBelief e);

// Parsers throw DataError on unknown names.
AnomalyClass parse_anomaly_class(std::string_view s);
ActionKind parse_action_kind(std::string_view s);
SoundClass parse_sound_class(std::string_view s);
ExistenceBelief parse_existence(std::string_view s);

}  // namespace anomid
