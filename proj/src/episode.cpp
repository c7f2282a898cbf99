#include "anomid/episode.hpp"

#include <cmath>
#include <fmt/format.h>

#include "anomid/error.hpp"

namespace anomid {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {"SAFE", "LOC", "DIS", "UNB"};
constexpr std::array<std::string_view, kNumActionKinds> kActionNames = {
    "MoveTowardsObject", "MoveToLocation", "PickUp", "PutDown", "PutDownOn", "Push"};
constexpr std::array<std::string_view, kNumSoundClasses> kSoundNames = {"NoSound", "Drop",
                                                                        "EgoNoise"};
constexpr std::array<std::string_view, kNumExistence> kExistenceNames = {"Yes", "No", "Unknown"};

template <typename Enum, std::size_t N>
Enum parse_named(std::string_view s, const std::array<std::string_view, N>& names,
                 std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<Enum>(i);
  }
  throw DataError(fmt::format("unknown {} '{}'", what, s));
}

std::size_t phase_offset(ActionKind a) {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(a); ++k) {
    offset += static_cast<std::size_t>(phase_count(static_cast<ActionKind>(k)));
  }
  return offset;
}

}  // namespace

std::size_t ActionPhase::global_index() const {
  return phase_offset(action) + static_cast<std::size_t>(phase_index);
}

ActionPhase ActionPhase::from_global_index(std::size_t index) {
  for (std::size_t k = 0; k < kNumActionKinds; ++k) {
    const auto action = static_cast<ActionKind>(k);
    const auto count = static_cast<std::size_t>(phase_count(action));
    if (index < count) return ActionPhase{action, static_cast<int>(index)};
    index -= count;
  }
  throw DataError("action-phase index out of range");
}

std::vector<Observation> Episode::observations() const {
  std::vector<Observation> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.obs);
  return out;
}

std::vector<AnomalyClass> Episode::labels() const {
  std::vector<AnomalyClass> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::optional<std::string> find_violation(const Observation& obs) {
  auto in_range = [](double v, double lo, double hi) {
    return std::isfinite(v) && v >= lo && v <= hi;
  };
  if (!in_range(obs.laser_distance_m, 0.0, kLaserMaxRangeM))
    return fmt::format("laser_distance_m {} outside [0, {}]", obs.laser_distance_m,
                       kLaserMaxRangeM);
  if (!in_range(obs.gripper_position, 0.0, 100.0))
    return fmt::format("gripper_position {} outside [0, 100]", obs.gripper_position);
  if (!in_range(obs.gripper_force, 0.0, 100.0))
    return fmt::format("gripper_force {} outside [0, 100]", obs.gripper_force);
  if (!std::isfinite(obs.target_offset_m)) return "target_offset_m is not finite";
  if (obs.target_existence == ExistenceBelief::Unknown && obs.target_offset_m != 0.0)
    return "target_offset_m must be 0 while target_existence is Unknown";
  if (obs.action_phase.phase_index < 0 ||
      obs.action_phase.phase_index >= phase_count(obs.action_phase.action))
    return fmt::format("phase_index {} out of range for {}", obs.action_phase.phase_index,
                       to_string(obs.action_phase.action));
  if (static_cast<std::size_t>(obs.sound) >= kNumSoundClasses) return "invalid sound class";
  if (static_cast<std::size_t>(obs.target_existence) >= kNumExistence)
    return "invalid existence belief";
  return std::nullopt;
}

std::optional<std::string> find_violation(const Episode& ep) {
  if (ep.id.empty()) return "id is empty";
  if (ep.samples.empty()) return "samples is empty";
  const int n = static_cast<int>(ep.samples.size());
  for (int k = 0; k < n; ++k) {
    const auto& s = ep.samples[static_cast<std::size_t>(k)];
    if (s.obs.t != k) return fmt::format("sample {} has t = {} (expected {})", k, s.obs.t, k);
    if (auto v = find_violation(s.obs)) return fmt::format("sample {}: {}", k, *v);
    if (static_cast<std::size_t>(s.label) >= kNumClasses)
      return fmt::format("sample {}: invalid label", k);
  }
  if (ep.case_label == AnomalyClass::Safe) {
    if (ep.anomaly_onset || ep.detection_step)
      return "safe episode must not carry anomaly_onset or detection_step";
    for (int k = 0; k < n; ++k) {
      if (ep.samples[static_cast<std::size_t>(k)].label != AnomalyClass::Safe)
        return fmt::format("safe episode has non-SAFE label at t = {}", k);
    }
    return std::nullopt;
  }
  if (!ep.anomaly_onset || !ep.detection_step)
    return "anomalous episode requires anomaly_onset and detection_step";
  const int onset = *ep.anomaly_onset;
  const int detect = *ep.detection_step;
  if (onset < 0) return "anomaly_onset is negative";
  if (onset > detect) return "anomaly_onset > detection_step";
  if (detect >= n) return "detection_step >= number of samples";
  for (int k = 0; k < n; ++k) {
    const auto expected = k < onset ? AnomalyClass::Safe : ep.case_label;
    const auto got = ep.samples[static_cast<std::size_t>(k)].label;
    if (got != expected)
      return fmt::format("label at t = {} is {} but {} expected (onset {})", k, to_string(got),
                         to_string(expected), onset);
  }
  return std::nullopt;
}

void validate(const Episode& episode) {
  if (auto v = find_violation(episode)) {
    throw DataError(fmt::format("episode '{}': {}", episode.id, *v));
  }
}

std::string_view to_string(AnomalyClass c) { return kClassNames.at(index_of(c)); }
std::string_view to_string(ActionKind a) { return kActionNames.at(static_cast<std::size_t>(a)); }
std::string_view to_string(SoundClass s) { return kSoundNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(ExistenceBelief e) {
  return kExistenceNames.at(static_cast<std::size_t>(e));
}

AnomalyClass parse_anomaly_class(std::string_view s) {
  return parse_named<AnomalyClass>(s, kClassNames, "anomaly class");
}
ActionKind parse_action_kind(std::string_view s) {
  return parse_named<ActionKind>(s, kActionNames, "action kind");
}
SoundClass parse_sound_class(std::string_view s) {
  return parse_named<SoundClass>(s, kSoundNames, "sound class");
}
ExistenceBelief parse_existence(std::string_view s) {
  return parse_named<ExistenceBelief>(s, kExistenceNames, "existence belief");
}

}  // namespace anomid
