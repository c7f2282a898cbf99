#include "anomid/pipeline.hpp"

#include <cmath>
#include <type_traits>

#include <fmt/format.h>

#include "anomid/error.hpp"

namespace anomid {

std::vector<AnomalyClass> HmmLabeler::label_sequence(std::span<const Observation> obs) const {
  return classify_sequence(bank_, obs);
}

std::vector<AnomalyClass> CrfLabeler::label_sequence(std::span<const Observation> obs) const {
  return decode(model_, obs);
}

std::vector<AnomalyClass> LstmLabeler::label_sequence(std::span<const Observation> obs) const {
  return predict_labels(model_, obs);
}

std::array<std::size_t, kNumClasses> vote_counts(std::span<const AnomalyClass> labels) {
  std::array<std::size_t, kNumClasses> votes{};
  for (auto l : labels) ++votes[index_of(l)];
  return votes;
}

AnomalyClass majority_vote(std::span<const AnomalyClass> labels) {
  if (labels.empty()) throw DataError("majority vote over an empty sequence");
  const auto votes = vote_counts(labels);
  // Anomaly classes first, in tie order, so SAFE only wins outright.
  AnomalyClass best = AnomalyClass::Loc;
  for (auto c : kAnomalyClasses) {
    if (votes[index_of(c)] > votes[index_of(best)]) best = c;
  }
  if (votes[index_of(AnomalyClass::Safe)] > votes[index_of(best)]) best = AnomalyClass::Safe;
  return best;
}

IdentificationResult run_episode(const Labeler& labeler, Detector& detector, std::span<const Observation> obs) {
  if (auto s = detector.scheduled_step()) {
    if (*s < 0 || static_cast<std::size_t>(*s) >= obs.size()) {
      throw DataError(fmt::format("detector fires at step {} but the episode has {} steps", *s, obs.size()));
    }
  }
  IdentificationResult res;
  std::vector<Observation> history;
  history.reserve(obs.size());
  for (const auto& x : obs) {
    history.push_back(x);
    if (detector.fires(history)) {
      res.detection_step = static_cast<int>(history.size()) - 1;
      break;
    }
  }
  if (res.detection_step) {
    res.labels = labeler.label_sequence(history);
    if (res.labels.size() != history.size()) {
      throw DataError(fmt::format("labeler '{}' returned {} labels for {} observations", labeler.name(),
                                  res.labels.size(), history.size()));
    }
  } else {
    res.labels.assign(history.size(), AnomalyClass::Safe);
  }
  res.votes = vote_counts(res.labels);
  res.final_class = res.labels.empty() ? AnomalyClass::Safe : majority_vote(res.labels);
  return res;
}

IdentificationResult run_episode(const Labeler& labeler, Detector& detector, const Episode& episode) {
  return run_episode(labeler, detector, episode.observations());
}

RawStreams to_streams(std::span<const Observation> obs) {
  RawStreams s;
  for (const auto& o : obs) {
    const double t = static_cast<double>(o.t) / kSampleRateHz;
    s.laser_distance_m.push_back({t, o.laser_distance_m});
    s.gripper_position.push_back({t, o.gripper_position});
    s.gripper_force.push_back({t, o.gripper_force});
    s.sound.push_back({t, o.sound});
    s.target_existence.push_back({t, o.target_existence});
    s.target_offset_m.push_back({t, o.target_offset_m});
    s.action_phase.push_back({t, o.action_phase});
  }
  return s;
}

namespace {

constexpr double kTimeTolerance = 1e-9;

template <typename T>
void check_stream(const std::vector<TimedSample<T>>& stream, std::string_view name) {
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (!std::isfinite(stream[i].t)) throw DataError(fmt::format("stream {}: non-finite time", name));
    if (i > 0 && stream[i].t < stream[i - 1].t) {
      throw DataError(fmt::format("stream {}: time goes backwards at sample {}", name, i));
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!std::isfinite(stream[i].value)) throw DataError(fmt::format("stream {}: non-finite value", name));
    }
  }
}

// Walks one stream forward as grid time advances.
template <typename T>
class Hold {
 public:
  Hold(const std::vector<TimedSample<T>>& stream, T fallback) : stream_(stream), value_(fallback) {}
  const T& at(double grid_t) {
    while (next_ < stream_.size() && stream_[next_].t <= grid_t + kTimeTolerance) value_ = stream_[next_++].value;
    return value_;
  }

 private:
  const std::vector<TimedSample<T>>& stream_;
  T value_;
  std::size_t next_ = 0;
};

}  // namespace

std::vector<Observation> fuse_stream(const RawStreams& s, std::size_t n_steps, double rate_hz) {
  if (!(rate_hz > 0.0)) throw DataError("fusion rate must be > 0");
  check_stream(s.laser_distance_m, "laser_distance_m");
  check_stream(s.gripper_position, "gripper_position");
  check_stream(s.gripper_force, "gripper_force");
  check_stream(s.sound, "sound");
  check_stream(s.target_existence, "target_existence");
  check_stream(s.target_offset_m, "target_offset_m");
  check_stream(s.action_phase, "action_phase");

  Hold<double> laser(s.laser_distance_m, 0.0);
  Hold<double> grip(s.gripper_position, 0.0);
  Hold<double> force(s.gripper_force, 0.0);
  Hold<SoundClass> sound(s.sound, SoundClass::NoSound);
  Hold<ExistenceBelief> existence(s.target_existence, ExistenceBelief::Unknown);
  Hold<double> offset(s.target_offset_m, 0.0);
  Hold<ActionPhase> phase(s.action_phase, ActionPhase{});

  std::vector<Observation> out(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    auto& o = out[k];
    o.t = static_cast<int>(k);
    o.laser_distance_m = laser.at(t);
    o.gripper_position = grip.at(t);
    o.gripper_force = force.at(t);
    o.sound = sound.at(t);
    o.target_existence = existence.at(t);
    o.target_offset_m = o.target_existence == ExistenceBelief::Unknown ? 0.0 : offset.at(t);
    o.action_phase = phase.at(t);
  }
  return out;
}

}  // namespace anomid
