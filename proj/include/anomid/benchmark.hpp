#pragma once

// Train/test splitting, method training, the repeated-split benchmark and
// report files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anomid/crf.hpp"
#include "anomid/episode.hpp"
#include "anomid/lstm.hpp"
#include "anomid/metrics.hpp"
#include "anomid/model_io.hpp"

namespace anomid {

struct SplitResult {
  std::vector<Episode> train;
  std::vector<Episode> test;
  std::vector<std::string> warnings;
};

// Stratified by case_label. Per class, the train share is allocated by
// largest remainder so the total is round(N * train_fraction), then clamped
// so classes with at least two episodes appear on both sides. Classes with a
// single episode go to train with a warning. Both halves keep dataset order.
SplitResult split_dataset(std::span<const Episode> dataset, double train_fraction, std::uint64_t seed);

struct MethodConfig {
  double hmm_smoothing = 1.0;
  CrfLbfgsConfig crf_lbfgs{};
  CrfArowConfig crf_arow{};
  LstmTrainConfig lstm{};
};

struct TrainedMethod {
  ModelFile model;
  std::vector<EpochStats> curve;  // LSTM only
  std::vector<std::string> warnings;
};

// Fits featurizer statistics on train, then the method. seed drives the
// LSTM initialization/shuffling and the AROW shuffling.
TrainedMethod train_method(MethodKind method, std::span<const Episode> train, const MethodConfig& config,
                           std::uint64_t seed, const EpochCallback& on_epoch = {});

std::map<std::string, std::string> describe(MethodKind method, const MethodConfig& config, std::uint64_t seed);

struct EpisodeOutcome {
  std::string id;
  AnomalyClass gold_case = AnomalyClass::Safe;
  AnomalyClass predicted_case = AnomalyClass::Safe;
  std::vector<AnomalyClass> gold_labels;  // steps consumed by the pipeline
  std::vector<AnomalyClass> labels;
  std::array<std::size_t, kNumClasses> votes{};
  std::optional<int> detection_step;
};

struct RunResult {
  int run = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<std::string> warnings;
  StateConfusion state;
  CaseConfusion cases;
  StateMetrics metrics;
  std::vector<EpisodeOutcome> episodes;
  std::vector<EpochStats> curve;
};

struct ScoreSummary {
  MeanStd precision, recall, f;
};

struct MethodReport {
  MethodKind method = MethodKind::Hmm;
  std::vector<RunResult> runs;
  int failed_runs = 0;
  // Across successful runs.
  std::array<ScoreSummary, kNumClasses> per_class{};
  ScoreSummary overall{};
  ScoreSummary overall_anomaly{};
  MeanStd micro_f{};
  StateConfusion state_total;  // summed over successful runs
  CaseConfusion case_total;
};

struct BenchmarkConfig {
  std::vector<MethodKind> methods{kAllMethods.begin(), kAllMethods.end()};
  int runs = 10;
  double train_fraction = 0.8;
  std::uint64_t master_seed = 1;
  MethodConfig method{};
  unsigned threads = 1;  // runs in flight at once
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::string dataset_fingerprint;
  std::size_t dataset_size = 0;
  std::vector<std::uint64_t> run_seeds;
  std::vector<MethodReport> methods;

  const MethodReport& method(MethodKind m) const;
};

// Seed of run r is derive_seed(master_seed, r). Within a run the split uses
// derive_seed(run_seed, 0) and method k of kAllMethods trains with
// derive_seed(run_seed, 1 + k). A method that throws during a run is
// recorded as failed for that run and left out of the aggregates.
using ProgressCallback = std::function<void(const std::string&)>;
BenchmarkReport run_benchmark(std::span<const Episode> dataset, const BenchmarkConfig& config,
                              const ProgressCallback& progress = {});

// Identification results for every test episode of a trained method.
RunResult evaluate(const Labeler& labeler, std::span<const Episode> test);

// Writes summary.txt and, per method, metrics_<m>.csv,
// state_confusion_<m>.csv and case_confusion_<m>.csv, plus
// loss_curve_lstm.csv when the LSTM was benchmarked. Creates out_dir.
void emit_report(const BenchmarkReport& report, const std::filesystem::path& out_dir);

}  // namespace anomid
