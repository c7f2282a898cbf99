#include "anomid/features.hpp"

#include <algorithm>

#include "anomid/error.hpp"

namespace anomid {

namespace {

std::array<double, kNumBins - 1> percentile_cuts(const std::vector<double>& sorted) {
  std::array<double, kNumBins - 1> cuts{};
  const double last = static_cast<double>(sorted.size() - 1);
  for (std::size_t q = 0; q < cuts.size(); ++q) {
    const double pos = last * static_cast<double>(q + 1) / static_cast<double>(kNumBins);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    const double a = sorted[lo];
    const double b = sorted[std::min(lo + 1, sorted.size() - 1)];
    cuts[q] = a + frac * (b - a);
  }
  return cuts;
}

bool strictly_increasing(const std::array<double, kNumBins - 1>& cuts) {
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    if (!(cuts[i] > cuts[i - 1])) return false;
  }
  return true;
}

}  // namespace

double continuous_value(const Observation& obs, ContinuousChannel channel) {
  switch (channel) {
    case ContinuousChannel::Laser:
      return obs.laser_distance_m;
    case ContinuousChannel::GripperPosition:
      return obs.gripper_position;
    case ContinuousChannel::GripperForce:
      return obs.gripper_force;
    case ContinuousChannel::Offset:
      return obs.target_offset_m;
  }
  return 0.0;
}

ChannelStats fit_channel(std::vector<double> values) {
  if (values.empty()) throw DataError("cannot fit channel statistics on no values");
  std::sort(values.begin(), values.end());
  ChannelStats s;
  s.min = values.front();
  s.max = values.back();
  if (!(s.min < s.max)) {
    s.constant = true;
    s.cuts.fill(s.min);
    return s;
  }
  s.cuts = percentile_cuts(values);
  if (!strictly_increasing(s.cuts)) {
    values.erase(std::unique(values.begin(), values.end()), values.end());
    s.cuts = percentile_cuts(values);
  }
  return s;
}

FeaturizerStats fit_stats(std::span<const Episode> train) {
  std::array<std::vector<double>, kNumContinuous> values;
  for (const auto& ep : train) {
    for (const auto& s : ep.samples) {
      for (std::size_t c = 0; c < kNumContinuous; ++c) {
        values[c].push_back(continuous_value(s.obs, static_cast<ContinuousChannel>(c)));
      }
    }
  }
  if (values[0].empty()) throw DataError("fit_stats: training set has no observations");
  FeaturizerStats stats;
  for (std::size_t c = 0; c < kNumContinuous; ++c) stats.channels[c] = fit_channel(std::move(values[c]));
  return stats;
}

FeatureVector encode(const Observation& obs, const FeaturizerStats& stats) {
  FeatureVector v{};
  for (std::size_t c = 0; c < kOffsetSlot; ++c) {
    const auto& ch = stats.channels[c];
    if (ch.constant) {
      v[c] = 0.5;
      continue;
    }
    const double x = std::clamp(continuous_value(obs, static_cast<ContinuousChannel>(c)), ch.min, ch.max);
    v[c] = (x - ch.min) / (ch.max - ch.min);
  }
  v[kOffsetSlot] = std::clamp(obs.target_offset_m, -kOffsetClipM, kOffsetClipM) / kOffsetClipM;
  v[kSoundSlot + static_cast<std::size_t>(obs.sound)] = 1.0;
  v[kExistenceSlot + static_cast<std::size_t>(obs.target_existence)] = 1.0;
  v[kPhaseSlot + obs.action_phase.global_index()] = 1.0;
  return v;
}

std::vector<FeatureVector> encode_sequence(std::span<const Observation> obs,
                                           const FeaturizerStats& stats) {
  std::vector<FeatureVector> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(encode(o, stats));
  return out;
}

int bin_of(double value, const ChannelStats& channel) {
  if (channel.constant) return 0;
  // Half-open bins: a value equal to a cut belongs to the bin above it.
  const auto it = std::upper_bound(channel.cuts.begin(), channel.cuts.end(), value);
  return static_cast<int>(it - channel.cuts.begin());
}

DiscreteObservation discretize(const Observation& obs, const FeaturizerStats& stats) {
  DiscreteObservation d;
  for (std::size_t c = 0; c < kNumContinuous; ++c) {
    d.codes[c] = bin_of(continuous_value(obs, static_cast<ContinuousChannel>(c)), stats.channels[c]);
  }
  d.codes[4] = static_cast<int>(obs.sound);
  d.codes[5] = static_cast<int>(obs.target_existence);
  d.codes[6] = static_cast<int>(obs.action_phase.global_index());
  return d;
}

std::vector<DiscreteObservation> discretize_sequence(std::span<const Observation> obs,
                                                     const FeaturizerStats& stats) {
  std::vector<DiscreteObservation> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(discretize(o, stats));
  return out;
}

}  // namespace anomid
