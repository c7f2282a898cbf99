#include "anomid/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "anomid/error.hpp"

namespace anomid {

namespace {

// Nominal sensor script for one (action, phase). Values ramp linearly from
// *_begin to *_end across the samples of the phase.
struct PhaseScript {
  double laser_begin, laser_end;
  double grip_begin, grip_end;
  double force_begin, force_end;
  SoundClass sound;
  bool occluded;  // arm blocks the camera's view of the target
};

constexpr SoundClass N = SoundClass::NoSound;
constexpr SoundClass E = SoundClass::EgoNoise;

constexpr double kHoldAperture = 45.0;
constexpr double kHoldForce = 40.0;
constexpr double kPushForce = 20.0;
constexpr double kFar = kLaserMaxRangeM;

PhaseScript script_for(ActionKind action, int phase, bool holding) {
  switch (action) {
    case ActionKind::MoveTowardsObject: {
      static constexpr PhaseScript s[5] = {
          {kFar, kFar, 0, 0, 0, 0, N, false},   // started
          {kFar, kFar, 0, 0, 0, 0, E, false},   // lift
          {kFar, 0.30, 0, 0, 0, 0, E, false},   // transit
          {0.30, 0.14, 0, 0, 0, 0, E, true},    // approach
          {0.14, 0.12, 0, 0, 0, 0, N, true},    // arrived
      };
      return s[phase];
    }
    case ActionKind::MoveToLocation: {
      const double laser = holding ? 0.02 : kFar;
      const double grip = holding ? kHoldAperture : 0.0;
      const double force = holding ? kHoldForce : 0.0;
      const SoundClass sounds[5] = {N, E, E, E, N};
      return {laser, laser, grip, grip, force, force, sounds[phase], false};
    }
    case ActionKind::PickUp: {
      static constexpr PhaseScript s[5] = {
          {0.12, 0.12, 0, 0, 0, 0, N, true},                                   // started
          {0.12, 0.05, 0, 0, 0, 0, E, true},                                   // approaching
          {0.05, 0.05, 0, 100, 0, 0, N, true},                                 // gripper open
          {0.05, 0.02, 100, kHoldAperture, 0, kHoldForce, E, true},            // grasp
          {0.02, 0.02, kHoldAperture, kHoldAperture, kHoldForce, kHoldForce, E, false},  // lift
      };
      return s[phase];
    }
    case ActionKind::PutDown:
    case ActionKind::PutDownOn: {
      static constexpr PhaseScript s[6] = {
          {0.02, 0.02, kHoldAperture, kHoldAperture, kHoldForce, kHoldForce, N, false},  // started
          {0.02, 0.02, kHoldAperture, kHoldAperture, kHoldForce, kHoldForce, E, false},  // transit
          {0.02, 0.02, kHoldAperture, kHoldAperture, kHoldForce, kHoldForce, E, true},   // lower
          {0.02, 0.04, kHoldAperture, 100, kHoldForce, 0, N, true},                      // release
          {0.04, 0.20, 100, 0, 0, 0, E, false},                                          // retreat
          {0.20, 0.20, 0, 0, 0, 0, N, false},                                            // finished
      };
      return s[phase];
    }
    case ActionKind::Push: {
      static constexpr PhaseScript s[6] = {
          {0.12, 0.12, 0, 0, 0, 0, N, true},                    // started
          {0.12, 0.04, 0, 0, 0, 0, E, true},                    // align
          {0.04, 0.02, 0, 0, 0, kPushForce, E, true},           // contact
          {0.02, 0.02, 0, 0, kPushForce, kPushForce, E, true},  // pushing
          {0.02, 0.12, 0, 0, kPushForce, 0, E, true},           // back off
          {0.12, 0.12, 0, 0, 0, 0, N, false},                   // finished
      };
      return s[phase];
    }
  }
  throw DataError("unknown action kind");
}

bool holds_after(ActionKind action, bool holding) {
  switch (action) {
    case ActionKind::PickUp:
      return true;
    case ActionKind::PutDown:
    case ActionKind::PutDownOn:
      return false;
    default:
      return holding;
  }
}

struct Segment {
  ActionKind action;
  int phase;
  int action_index;  // position in the plan
  int begin;         // first step
  int length;
  bool holding;      // object in the gripper when the action starts
};

std::vector<Segment> expand(const std::vector<ActionKind>& plan, int per_phase) {
  std::vector<Segment> segs;
  int step = 0;
  bool holding = false;
  for (std::size_t a = 0; a < plan.size(); ++a) {
    for (int p = 0; p < phase_count(plan[a]); ++p) {
      segs.push_back({plan[a], p, static_cast<int>(a), step, per_phase, holding});
      step += per_phase;
    }
    holding = holds_after(plan[a], holding);
  }
  return segs;
}

const Segment& find_segment(const std::vector<Segment>& segs, int action_index, int phase) {
  for (const auto& s : segs) {
    if (s.action_index == action_index && s.phase == phase) return s;
  }
  throw DataError("scenario script has no such phase");
}

double lerp(double a, double b, int j, int n) {
  if (n <= 1) return a;
  return a + (b - a) * static_cast<double>(j) / static_cast<double>(n - 1);
}

double signed_uniform(std::mt19937_64& rng, double lo, double hi) {
  const double mag = std::uniform_real_distribution<double>(lo, hi)(rng);
  return std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
}

// Everything random about an episode except per-step sensor noise.
struct Injection {
  int onset = -1;
  int detection = -1;
  int end = 0;             // one past the last emitted step
  double displacement = 0; // LOC
  double first_offset = 0; // offset of the first tower placement
  double second_offset = 0;
  int drop_step = -1;      // UNB collapse
};

Injection plan_injection(const ScenarioSpec& spec, const std::vector<Segment>& segs,
                         std::mt19937_64& rng) {
  Injection inj;
  inj.end = segs.back().begin + segs.back().length;
  const bool tower = spec.kind == ScenarioKind::BuildTower;
  if (tower) {
    // Stable placements can still be visibly offset.
    inj.first_offset = signed_uniform(rng, 0.005, 0.02);
    inj.second_offset = signed_uniform(rng, 0.0, 0.01);
  }
  auto end_of_action = [&](int step) {
    int action = -1;
    for (const auto& s : segs) {
      if (step >= s.begin && step < s.begin + s.length) action = s.action_index;
    }
    int end = 0;
    for (const auto& s : segs) {
      if (s.action_index == action) end = s.begin + s.length;
    }
    return end;
  };
  auto first_visible_from = [&](int step) {
    for (const auto& s : segs) {
      const bool occluded = script_for(s.action, s.phase, s.holding).occluded;
      if (!occluded && s.begin + s.length > step) return std::max(step, s.begin);
    }
    throw DataError("scenario script never clears the occlusion");
  };

  switch (spec.anomaly) {
    case AnomalyClass::Safe:
      break;
    case AnomalyClass::Loc:
    case AnomalyClass::Dis: {
      // The target is moved or removed while the arm closes in on it.
      const Segment& approach =
          tower ? find_segment(segs, 0, 1) : find_segment(segs, 0, 3);
      inj.onset = approach.begin +
                  std::uniform_int_distribution<int>(0, approach.length - 1)(rng);
      inj.displacement = signed_uniform(rng, 0.05, 0.15);
      inj.detection = first_visible_from(inj.onset);
      inj.end = end_of_action(inj.detection);
      break;
    }
    case AnomalyClass::Unb: {
      // Misplaced first block; the tower falls when the second one lands.
      const Segment& release1 = find_segment(segs, 1, 3);
      const Segment& release2 = find_segment(segs, 3, 3);
      inj.onset = release1.begin +
                  std::uniform_int_distribution<int>(0, std::min(2, release1.length - 1))(rng);
      inj.first_offset = signed_uniform(rng, 0.03, 0.05);
      const int latest = std::max(0, release2.length - 2);
      inj.drop_step = release2.begin +
                      std::uniform_int_distribution<int>(std::min(2, latest), latest)(rng);
      inj.detection = inj.drop_step;
      break;
    }
  }
  return inj;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::PushObject:
      return "PushObject";
    case ScenarioKind::PickObject:
      return "PickObject";
    case ScenarioKind::BuildTower:
      return "BuildTower";
  }
  return "?";
}

std::vector<ActionKind> scenario_plan(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::PushObject:
      return {ActionKind::MoveTowardsObject, ActionKind::Push};
    case ScenarioKind::PickObject:
      return {ActionKind::MoveTowardsObject, ActionKind::PickUp, ActionKind::MoveToLocation};
    case ScenarioKind::BuildTower:
      return {ActionKind::PickUp, ActionKind::PutDownOn, ActionKind::PickUp,
              ActionKind::PutDownOn};
  }
  return {};
}

void validate(const ScenarioSpec& spec) {
  if (spec.anomaly == AnomalyClass::Unb && spec.kind != ScenarioKind::BuildTower) {
    throw DataError(fmt::format("UNB requires BuildTower, got {}", to_string(spec.kind)));
  }
  if (!std::isfinite(spec.noise_level) || spec.noise_level < 0.0) {
    throw DataError("noise_level must be finite and >= 0");
  }
  if (spec.samples_per_phase < 1) throw DataError("samples_per_phase must be >= 1");
}

Episode generate_episode(const ScenarioSpec& spec) {
  validate(spec);
  const auto plan = scenario_plan(spec.kind);
  const auto segs = expand(plan, spec.samples_per_phase);

  std::mt19937_64 inject_rng(derive_seed(spec.seed, 0));
  std::mt19937_64 noise_rng(derive_seed(spec.seed, 1));
  std::mt19937_64 collapse_rng(derive_seed(spec.seed, 2));
  const Injection inj = plan_injection(spec, segs, inject_rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const AnomalyClass cls = spec.anomaly;
  const bool target_lost = cls == AnomalyClass::Loc || cls == AnomalyClass::Dis;

  Episode ep;
  ep.id = fmt::format("{}-{}-{:016x}", to_string(spec.kind), to_string(cls), spec.seed);
  ep.plan = plan;
  ep.case_label = cls;
  if (cls != AnomalyClass::Safe) {
    ep.anomaly_onset = inj.onset;
    ep.detection_step = inj.detection;
  }

  for (const auto& seg : segs) {
    const PhaseScript ps = script_for(seg.action, seg.phase, seg.holding);
    for (int j = 0; j < seg.length; ++j) {
      const int t = seg.begin + j;
      if (t >= inj.end) break;
      // Draw every noise term unconditionally so that scripts sharing a seed
      // share their noise sequence.
      const double n_laser = gauss(noise_rng) * NoiseModel::kLaserStdM * spec.noise_level;
      const double n_grip = gauss(noise_rng) * NoiseModel::kGripperPositionStd * spec.noise_level;
      const double n_force = gauss(noise_rng) * NoiseModel::kGripperForceStd * spec.noise_level;
      const double n_offset = gauss(noise_rng) * NoiseModel::kOffsetStdM * spec.noise_level;

      double laser = lerp(ps.laser_begin, ps.laser_end, j, seg.length);
      double grip = lerp(ps.grip_begin, ps.grip_end, j, seg.length);
      double force = lerp(ps.force_begin, ps.force_end, j, seg.length);
      SoundClass sound = ps.sound;
      ExistenceBelief existence = ps.occluded ? ExistenceBelief::Unknown : ExistenceBelief::Yes;
      double offset = 0.0;

      const bool first_place = seg.action == ActionKind::PutDownOn && seg.action_index == 1;
      const bool second_place = seg.action == ActionKind::PutDownOn && seg.action_index == 3;
      if (first_place && seg.phase >= 4) offset = inj.first_offset;
      if (second_place && seg.phase >= 4) offset = inj.second_offset;

      const bool after_onset = inj.onset >= 0 && t >= inj.onset;
      if (target_lost && after_onset) {
        // Range reading now hits the displaced object or nothing at all.
        laser = cls == AnomalyClass::Dis
                    ? kFar
                    : std::hypot(laser, inj.displacement);
        if (seg.action == ActionKind::PickUp && seg.phase >= 3) {
          grip = seg.phase == 3 ? lerp(100.0, 0.0, j, seg.length) : 0.0;
          force = 0.0;
        }
        if (seg.action == ActionKind::Push) force = 0.0;
        if (cls == AnomalyClass::Loc) {
          offset = inj.displacement;
        } else if (existence != ExistenceBelief::Unknown) {
          existence = ExistenceBelief::No;
        }
      }
      if (cls == AnomalyClass::Unb && second_place) {
        if (t == inj.drop_step || t == inj.drop_step + 1) sound = SoundClass::Drop;
        if (seg.phase >= 4) {
          if (std::bernoulli_distribution(0.5)(collapse_rng)) {
            existence = ExistenceBelief::No;
            laser = kFar;
          } else {
            offset = signed_uniform(collapse_rng, 0.05, 0.15);
            laser = std::hypot(laser, offset);
          }
        }
      }

      Observation obs;
      obs.t = t;
      obs.laser_distance_m = std::clamp(laser + n_laser, 0.0, kLaserMaxRangeM);
      obs.gripper_position = std::clamp(grip + n_grip, 0.0, 100.0);
      obs.gripper_force = std::clamp(force + n_force, 0.0, 100.0);
      obs.sound = sound;
      obs.target_existence = existence;
      obs.target_offset_m = existence == ExistenceBelief::Yes ? offset + n_offset : 0.0;
      obs.action_phase = {seg.action, seg.phase};

      const AnomalyClass label = after_onset ? cls : AnomalyClass::Safe;
      ep.samples.push_back({obs, label});
    }
  }
  validate(ep);
  return ep;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<Episode> generate_dataset(const DatasetSpec& spec) {
  if (spec.n_dis < 0 || spec.n_unb < 0 || spec.n_loc < 0 || spec.n_safe < 0) {
    throw DataError("episode counts must be >= 0");
  }
  struct Block {
    AnomalyClass cls;
    int count;
  };
  const Block blocks[] = {{AnomalyClass::Dis, spec.n_dis},
                          {AnomalyClass::Unb, spec.n_unb},
                          {AnomalyClass::Loc, spec.n_loc},
                          {AnomalyClass::Safe, spec.n_safe}};
  std::vector<Episode> out;
  std::uint64_t index = 0;
  for (const auto& block : blocks) {
    for (int i = 0; i < block.count; ++i, ++index) {
      ScenarioSpec s;
      s.anomaly = block.cls;
      s.kind = block.cls == AnomalyClass::Unb ? ScenarioKind::BuildTower
                                              : kAllScenarioKinds[static_cast<std::size_t>(i) % 3];
      s.seed = derive_seed(spec.seed, index);
      s.noise_level = spec.noise_level;
      s.samples_per_phase = spec.samples_per_phase;
      Episode ep = generate_episode(s);
      ep.id = fmt::format("{:03d}-{}-{}", index, to_string(block.cls), to_string(s.kind));
      out.push_back(std::move(ep));
    }
  }
  return out;
}

}  // namespace anomid
