#pragma once

// Step-by-step identification: buffer observations as the plan executes,
// label the buffered history once an anomaly is detected, and reduce the
// labels to one cause by majority vote.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anomid/crf.hpp"
#include "anomid/episode.hpp"
#include "anomid/hmm.hpp"
#include "anomid/lstm.hpp"

namespace anomid {

class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual std::vector<AnomalyClass> label_sequence(std::span<const Observation> obs) const = 0;
  virtual std::string_view name() const = 0;
};

class HmmLabeler final : public Labeler {
 public:
  explicit HmmLabeler(HmmBank bank) : bank_(std::move(bank)) {}
  std::vector<AnomalyClass> label_sequence(std::span<const Observation> obs) const override;
  std::string_view name() const override { return "hmm"; }
  const HmmBank& bank() const { return bank_; }

 private:
  HmmBank bank_;
};

class CrfLabeler final : public Labeler {
 public:
  CrfLabeler(CrfModel model, std::string name) : model_(std::move(model)), name_(std::move(name)) {}
  std::vector<AnomalyClass> label_sequence(std::span<const Observation> obs) const override;
  std::string_view name() const override { return name_; }
  const CrfModel& model() const { return model_; }

 private:
  CrfModel model_;
  std::string name_;
};

class LstmLabeler final : public Labeler {
 public:
  explicit LstmLabeler(LstmModel model) : model_(std::move(model)) {}
  std::vector<AnomalyClass> label_sequence(std::span<const Observation> obs) const override;
  std::string_view name() const override { return "lstm"; }
  const LstmModel& model() const { return model_; }

 private:
  LstmModel model_;
};

// Decides, one observation at a time, whether an anomaly has occurred.
class Detector {
 public:
  virtual ~Detector() = default;
  // Called with the history so far (observation t is the last element).
  virtual bool fires(std::span<const Observation> history) = 0;
  // Step at which the detector is known to fire, if it can tell in advance.
  // run_episode rejects a schedule beyond the episode end.
  virtual std::optional<int> scheduled_step() const { return std::nullopt; }
};

// Fires at a fixed step, by default the episode's recorded detection step.
class ReplayDetector final : public Detector {
 public:
  explicit ReplayDetector(std::optional<int> step) : step_(step) {}
  explicit ReplayDetector(const Episode& ep) : step_(ep.detection_step) {}
  bool fires(std::span<const Observation> history) override {
    return step_ && static_cast<int>(history.size()) - 1 == *step_;
  }
  std::optional<int> scheduled_step() const override { return step_; }

 private:
  std::optional<int> step_;
};

class NeverDetector final : public Detector {
 public:
  bool fires(std::span<const Observation>) override { return false; }
};

struct IdentificationResult {
  std::vector<AnomalyClass> labels;  // one per consumed step
  AnomalyClass final_class = AnomalyClass::Safe;
  std::array<std::size_t, kNumClasses> votes{};
  std::optional<int> detection_step;
};

// Ties between anomaly classes resolve LOC < DIS < UNB; a tie between SAFE
// and an anomaly class goes to the anomaly class. Throws DataError on empty input.
AnomalyClass majority_vote(std::span<const AnomalyClass> labels);
std::array<std::size_t, kNumClasses> vote_counts(std::span<const AnomalyClass> labels);

// Feeds observations to the detector in order. On detection at step T the
// labeler sees observations 0..T and later steps are never read. Without a
// detection every consumed step is SAFE. Throws DataError when the detector
// is scheduled past the last step or the labeler returns the wrong length.
IdentificationResult run_episode(const Labeler& labeler, Detector& detector, const Episode& episode);
IdentificationResult run_episode(const Labeler& labeler, Detector& detector, std::span<const Observation> obs);

// Timestamped readings from one modality.
template <typename T>
struct TimedSample {
  double t = 0.0;
  T value{};
};

struct RawStreams {
  std::vector<TimedSample<double>> laser_distance_m;
  std::vector<TimedSample<double>> gripper_position;
  std::vector<TimedSample<double>> gripper_force;
  std::vector<TimedSample<SoundClass>> sound;
  std::vector<TimedSample<ExistenceBelief>> target_existence;
  std::vector<TimedSample<double>> target_offset_m;
  std::vector<TimedSample<ActionPhase>> action_phase;
};

// Splits observations into per-modality streams stamped with their own times.
RawStreams to_streams(std::span<const Observation> obs);

// Zero-order hold of every modality onto steps t = k / rate for k < n_steps.
// A reading at time s is visible from the first grid time >= s (with a
// 1e-9 s tolerance). Before a modality's first reading its default applies:
// NoSound, Unknown, 0 for continuous values, the first phase of the first
// action. Offsets are forced to 0 while existence is Unknown. Throws
// DataError if a stream is not sorted by time or holds a non-finite value.
std::vector<Observation> fuse_stream(const RawStreams& streams, std::size_t n_steps,
                                     double rate_hz = kSampleRateHz);

}  // namespace anomid
