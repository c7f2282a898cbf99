#pragma once

// Observation encodings: a 43-wide real vector for the LSTM and a 7-channel
// discrete code for the HMM and CRF. Statistics are fitted on training data.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "anomid/episode.hpp"

namespace anomid {

// Continuous channels, in this order, in both encodings.
enum class ContinuousChannel : std::uint8_t { Laser = 0, GripperPosition, GripperForce, Offset };
inline constexpr std::size_t kNumContinuous = 4;
inline constexpr std::size_t kNumBins = 4;

// Discrete channel layout: 4 binned continuous channels, then sound,
// existence and action phase.
inline constexpr std::size_t kNumDiscreteChannels = 7;
inline constexpr std::array<std::size_t, kNumDiscreteChannels> kChannelCardinality = {
    kNumBins, kNumBins, kNumBins, kNumBins, kNumSoundClasses, kNumExistence, kNumPhases};
inline constexpr std::array<const char*, kNumDiscreteChannels> kChannelNames = {
    "laser", "gripper_position", "gripper_force", "offset", "sound", "existence", "phase"};

// Feature vector layout.
inline constexpr std::size_t kFeatureWidth = 43;
inline constexpr std::size_t kOffsetSlot = 3;
inline constexpr std::size_t kSoundSlot = 4;
inline constexpr std::size_t kExistenceSlot = 7;
inline constexpr std::size_t kPhaseSlot = 10;
// Offsets are clipped to +-kOffsetClipM and scaled to [-1, 1].
inline constexpr double kOffsetClipM = 0.3;

using FeatureVector = std::array<double, kFeatureWidth>;

struct DiscreteObservation {
  std::array<int, kNumDiscreteChannels> codes{};
  friend bool operator==(const DiscreteObservation&, const DiscreteObservation&) = default;
};

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  bool constant = false;
  // Strictly increasing when !constant. Bins are [-inf,c0), [c0,c1), [c1,c2), [c2,inf).
  std::array<double, kNumBins - 1> cuts{};

  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

struct FeaturizerStats {
  std::array<ChannelStats, kNumContinuous> channels{};
  friend bool operator==(const FeaturizerStats&, const FeaturizerStats&) = default;
};

double continuous_value(const Observation& obs, ContinuousChannel channel);

// Equal-count cut points at the 25/50/75 percentiles (linear interpolation
// between order statistics). When ties make them non-increasing, the
// percentiles of the distinct values are used instead.
ChannelStats fit_channel(std::vector<double> values);

// Throws DataError when train holds no observations.
FeaturizerStats fit_stats(std::span<const Episode> train);

FeatureVector encode(const Observation& obs, const FeaturizerStats& stats);
std::vector<FeatureVector> encode_sequence(std::span<const Observation> obs,
                                           const FeaturizerStats& stats);

int bin_of(double value, const ChannelStats& channel);
DiscreteObservation discretize(const Observation& obs, const FeaturizerStats& stats);
std::vector<DiscreteObservation> discretize_sequence(std::span<const Observation> obs,
                                                     const FeaturizerStats& stats);

}  // namespace anomid
