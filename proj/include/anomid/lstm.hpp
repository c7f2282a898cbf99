#pragma once

// Single-layer LSTM with a per-step softmax head over the four labels.
//
//   z   = W h_prev + U x + b          (gate blocks in order f, i, g, o)
//   f, i, o = sigmoid(z_f, z_i, z_o),   g = tanh(z_g)
//   c   = f * c_prev + i * g
//   h   = o * tanh(c)
//   log p = log_softmax(V h + d)

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "anomid/episode.hpp"
#include "anomid/features.hpp"

namespace anomid {

enum class LstmGate : std::uint8_t { Forget = 0, Input = 1, Candidate = 2, Output = 3 };
inline constexpr std::size_t kNumGates = 4;

// All parameters in one flat vector:
//   W  4H x H   row-major, row = gate * H + unit
//   Ut I x 4H   U stored transposed so sparse inputs touch contiguous rows
//   b  4H
//   V  4 x H
//   d  4
class LstmParams {
 public:
  LstmParams() = default;
  // All zeros.
  explicit LstmParams(std::size_t hidden, std::size_t input = kFeatureWidth);
  // Uniform in [-1/sqrt(H), 1/sqrt(H)], forget-gate bias then set to 1.
  static LstmParams initialized(std::size_t hidden, std::uint64_t seed, std::size_t input = kFeatureWidth);

  std::size_t hidden() const { return hidden_; }
  std::size_t input() const { return input_; }
  std::size_t size() const { return data_.size(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  std::span<double> w() { return block(w_offset(), 4 * hidden_ * hidden_); }
  std::span<double> ut() { return block(ut_offset(), input_ * 4 * hidden_); }
  std::span<double> b() { return block(b_offset(), 4 * hidden_); }
  std::span<double> v() { return block(v_offset(), kNumClasses * hidden_); }
  std::span<double> d() { return block(d_offset(), kNumClasses); }
  std::span<const double> w() const { return cblock(w_offset(), 4 * hidden_ * hidden_); }
  std::span<const double> ut() const { return cblock(ut_offset(), input_ * 4 * hidden_); }
  std::span<const double> b() const { return cblock(b_offset(), 4 * hidden_); }
  std::span<const double> v() const { return cblock(v_offset(), kNumClasses * hidden_); }
  std::span<const double> d() const { return cblock(d_offset(), kNumClasses); }

  // Element access in the textbook orientation.
  double& w_at(LstmGate g, std::size_t unit, std::size_t from) {
    return data_[w_offset() + (gate_row(g, unit)) * hidden_ + from];
  }
  double& u_at(LstmGate g, std::size_t unit, std::size_t in) {
    return data_[ut_offset() + in * 4 * hidden_ + gate_row(g, unit)];
  }
  double& b_at(LstmGate g, std::size_t unit) { return data_[b_offset() + gate_row(g, unit)]; }
  double& v_at(std::size_t cls, std::size_t unit) { return data_[v_offset() + cls * hidden_ + unit]; }
  double& d_at(std::size_t cls) { return data_[d_offset() + cls]; }
  double w_at(LstmGate g, std::size_t unit, std::size_t from) const {
    return data_[w_offset() + (gate_row(g, unit)) * hidden_ + from];
  }
  double u_at(LstmGate g, std::size_t unit, std::size_t in) const {
    return data_[ut_offset() + in * 4 * hidden_ + gate_row(g, unit)];
  }
  double b_at(LstmGate g, std::size_t unit) const { return data_[b_offset() + gate_row(g, unit)]; }
  double v_at(std::size_t cls, std::size_t unit) const { return data_[v_offset() + cls * hidden_ + unit]; }
  double d_at(std::size_t cls) const { return data_[d_offset() + cls]; }

  friend bool operator==(const LstmParams&, const LstmParams&) = default;

 private:
  std::size_t gate_row(LstmGate g, std::size_t unit) const { return static_cast<std::size_t>(g) * hidden_ + unit; }
  std::size_t w_offset() const { return 0; }
  std::size_t ut_offset() const { return 4 * hidden_ * hidden_; }
  std::size_t b_offset() const { return ut_offset() + input_ * 4 * hidden_; }
  std::size_t v_offset() const { return b_offset() + 4 * hidden_; }
  std::size_t d_offset() const { return v_offset() + kNumClasses * hidden_; }
  std::span<double> block(std::size_t off, std::size_t n) { return std::span<double>(data_).subspan(off, n); }
  std::span<const double> cblock(std::size_t off, std::size_t n) const {
    return std::span<const double>(data_).subspan(off, n);
  }

  std::size_t hidden_ = 0;
  std::size_t input_ = 0;
  std::vector<double> data_;
};

struct LstmState {
  std::vector<double> c;
  std::vector<double> h;

  static LstmState zeros(std::size_t hidden) { return {std::vector<double>(hidden), std::vector<double>(hidden)}; }
};

// Activations of one step, kept for backpropagation.
struct LstmStepCache {
  std::vector<double> gates;  // f, i, g, o activations (4H)
  LstmState state;            // c_t and h_t
};

// Throws DivergenceError when the new state is not finite.
LstmState lstm_step(const LstmParams& params, const LstmState& prev, std::span<const double> x,
                    LstmStepCache* cache = nullptr);

using ClassLogProbs = std::array<double, kNumClasses>;

struct LstmForward {
  std::vector<ClassLogProbs> log_probs;
  std::vector<LstmStepCache> caches;  // filled only when requested
};

LstmForward forward_sequence(const LstmParams& params, std::span<const FeatureVector> xs,
                             bool keep_caches = false);

// Mean per-step cross-entropy. grad is resized to params.size() and
// overwritten. predicted, when given, receives the per-step argmax labels.
double loss_and_gradients(const LstmParams& params, std::span<const FeatureVector> xs,
                          std::span<const AnomalyClass> gold, std::vector<double>& grad,
                          std::vector<AnomalyClass>* predicted = nullptr);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  void apply(std::span<double> params, std::span<const double> grad);
};

struct LstmTrainConfig {
  int epochs = 500;
  double lr = 1e-3;
  std::size_t hidden = 64;
  std::uint64_t init_seed = 1;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;  // mean over episodes of the per-episode mean loss
  double f_score = 0.0;  // four-class macro F of the predictions made during the epoch
};

struct LstmModel {
  LstmParams params;
  FeaturizerStats stats;
};

struct LstmTrainResult {
  LstmModel model;
  std::vector<EpochStats> curve;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Adam, one episode per update, order reshuffled each epoch from init_seed.
// Throws DivergenceError naming the epoch if the loss becomes non-finite.
LstmTrainResult train_lstm(std::span<const Episode> train, const FeaturizerStats& stats,
                           const LstmTrainConfig& config, const EpochCallback& on_epoch = {});

// Per-step argmax; ties go to the lower class index.
std::vector<AnomalyClass> argmax_labels(std::span<const ClassLogProbs> log_probs);
std::vector<AnomalyClass> predict_labels(const LstmModel& model, std::span<const Observation> obs);

}  // namespace anomid
