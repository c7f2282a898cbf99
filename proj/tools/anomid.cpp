// Command-line entry point: simgen, train, identify, benchmark.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error, 3 training divergence.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "anomid/benchmark.hpp"
#include "anomid/episode_io.hpp"
#include "anomid/error.hpp"
#include "anomid/model_io.hpp"
#include "anomid/pipeline.hpp"
#include "anomid/simulator.hpp"

namespace {

using namespace anomid;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

void add_method_flags(CLI::App* cmd, MethodConfig& cfg) {
  cmd->add_option("--epochs", cfg.lstm.epochs, "LSTM training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", cfg.lstm.lr, "LSTM Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", cfg.lstm.hidden, "LSTM hidden units")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--grad-clip", cfg.lstm.grad_clip, "LSTM global gradient-norm clip (0 disables)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--l2", cfg.crf_lbfgs.l2, "CRF L-BFGS L2 regularizer")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-iters", cfg.crf_lbfgs.lbfgs.max_iters, "CRF L-BFGS iteration cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--arow-r", cfg.crf_arow.r, "CRF AROW regularization r")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--arow-epochs", cfg.crf_arow.epochs, "CRF AROW passes over the data")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--smoothing", cfg.hmm_smoothing, "HMM additive smoothing")->capture_default_str()->check(CLI::PositiveNumber);
}

std::vector<MethodKind> parse_methods(const std::string& spec) {
  if (spec == "all") return {kAllMethods.begin(), kAllMethods.end()};
  std::vector<MethodKind> out;
  if (spec.empty() || spec == "none") return out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto name = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const auto m = parse_method_kind(name);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_simgen(const DatasetSpec& spec, const std::string& out) {
  const auto episodes = generate_dataset(spec);
  write_episodes(episodes, out);
  fmt::print("wrote {} episodes to {}\n", episodes.size(), out);
  return 0;
}

int cmd_train(const std::string& method_name, const std::string& data, std::uint64_t seed, const std::string& out,
              const MethodConfig& cfg, const std::string& curve_path, bool quiet) {
  const auto method = parse_method_kind(method_name);
  const auto episodes = read_episodes(data);
  EpochCallback on_epoch;
  if (!quiet) {
    on_epoch = [](const EpochStats& e) {
      if (e.epoch == 1 || e.epoch % 50 == 0) fmt::print(stderr, "epoch {} loss {:.6f} f {:.4f}\n", e.epoch, e.loss, e.f_score);
    };
  }
  auto trained = train_method(method, episodes, cfg, seed, on_epoch);
  for (const auto& w : trained.warnings) fmt::print(stderr, "warning: {}\n", w);
  save_model(trained.model, out);
  if (!curve_path.empty()) {
    std::FILE* f = std::fopen(curve_path.c_str(), "wb");
    if (!f) throw DataError(fmt::format("cannot open {} for writing", curve_path));
    fmt::print(f, "epoch,loss,f_score\n");
    for (const auto& e : trained.curve) fmt::print(f, "{},{:.6f},{:.6f}\n", e.epoch, e.loss, e.f_score);
    std::fclose(f);
  }
  fmt::print("trained {} on {} episodes, wrote {}\n", to_string(method), episodes.size(), out);
  return 0;
}

int cmd_identify(const std::string& model_path, const std::string& data, const std::string& episode_id,
                 bool never_detect) {
  const auto model = load_model(model_path);
  const auto labeler = make_labeler(model);
  const auto episodes = read_episodes(data);
  auto it = std::find_if(episodes.begin(), episodes.end(), [&](const Episode& e) { return e.id == episode_id; });
  if (it == episodes.end()) throw DataError(fmt::format("episode '{}' not found in {}", episode_id, data));
  std::unique_ptr<Detector> detector;
  if (never_detect) {
    detector = std::make_unique<NeverDetector>();
  } else {
    detector = std::make_unique<ReplayDetector>(*it);
  }
  const auto res = run_episode(*labeler, *detector, *it);
  nlohmann::ordered_json rec;
  rec["episode"] = it->id;
  rec["method"] = to_string(model.kind);
  rec["final_class"] = to_string(res.final_class);
  rec["gold_class"] = to_string(it->case_label);
  rec["detection_step"] = res.detection_step ? nlohmann::ordered_json(*res.detection_step) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json votes;
  for (auto c : kAllClasses) votes[std::string(to_string(c))] = res.votes[index_of(c)];
  rec["votes"] = votes;
  auto labels = nlohmann::ordered_json::array();
  for (auto l : res.labels) labels.push_back(to_string(l));
  rec["labels"] = labels;
  std::cout << rec.dump() << "\n";
  return 0;
}

int cmd_benchmark(const std::string& data, const std::string& methods, BenchmarkConfig cfg, const std::string& out,
                  bool quiet) {
  cfg.methods = parse_methods(methods);
  const auto episodes = read_episodes(data);
  ProgressCallback progress;
  if (!quiet) progress = [](const std::string& msg) { fmt::print(stderr, "{}\n", msg); };
  const auto report = run_benchmark(episodes, cfg, progress);
  emit_report(report, out);
  for (const auto& mr : report.methods) {
    fmt::print("{:<10} overall F {:.4f} +- {:.4f}  anomaly F {:.4f} +- {:.4f}{}\n", to_string(mr.method),
               mr.overall.f.mean, mr.overall.f.std, mr.overall_anomaly.f.mean, mr.overall_anomaly.f.std,
               mr.failed_runs > 0 ? fmt::format("  ({} failed runs)", mr.failed_runs) : "");
  }
  fmt::print("report written to {}\n", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly cause identification for manipulation episodes"};
  app.require_subcommand(1);

  DatasetSpec sim;
  std::string sim_out;
  auto* simgen = app.add_subcommand("simgen", "Generate a synthetic episode dataset");
  simgen->add_option("--dis", sim.n_dis, "Disappearance episodes")->capture_default_str()->check(CLI::NonNegativeNumber);
  simgen->add_option("--unb", sim.n_unb, "Unbalance episodes")->capture_default_str()->check(CLI::NonNegativeNumber);
  simgen->add_option("--loc", sim.n_loc, "Location episodes")->capture_default_str()->check(CLI::NonNegativeNumber);
  simgen->add_option("--safe", sim.n_safe, "Anomaly-free episodes")->capture_default_str()->check(CLI::NonNegativeNumber);
  simgen->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  simgen->add_option("--noise", sim.noise_level, "Sensor noise multiplier")->capture_default_str()->check(CLI::NonNegativeNumber);
  simgen->add_option("--samples-per-phase", sim.samples_per_phase, "Samples per action phase")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  simgen->add_option("--out", sim_out, "Output episode file")->required();

  std::string train_method_name, train_data, train_out, train_curve;
  std::uint64_t train_seed = 1;
  bool train_quiet = false;
  MethodConfig train_cfg;
  auto* train = app.add_subcommand("train", "Train one method on a whole episode file");
  train->add_option("--method", train_method_name, "hmm | crf-lbfgs | crf-arow | lstm")
      ->required()
      ->check(CLI::IsMember({"hmm", "crf-lbfgs", "crf-arow", "lstm"}));
  train->add_option("--data", train_data, "Episode file")->required();
  train->add_option("--seed", train_seed, "Training seed")->capture_default_str();
  train->add_option("--out", train_out, "Output model file")->required();
  train->add_option("--curve", train_curve, "Write the LSTM loss/F-score curve to this CSV file");
  train->add_flag("--quiet", train_quiet, "No progress output");
  add_method_flags(train, train_cfg);

  std::string id_model, id_data, id_episode;
  bool id_never = false;
  auto* identify = app.add_subcommand("identify", "Identify the anomaly cause of one episode");
  identify->add_option("--model", id_model, "Model file")->required();
  identify->add_option("--data", id_data, "Episode file")->required();
  identify->add_option("--episode", id_episode, "Episode id")->required();
  identify->add_flag("--never-detect", id_never, "Use a detector that never fires");

  std::string bench_data, bench_methods = "all", bench_out;
  bool bench_quiet = false;
  BenchmarkConfig bench_cfg;
  auto* bench = app.add_subcommand("benchmark", "Repeated random-split benchmark");
  bench->add_option("--data", bench_data, "Episode file")->required();
  bench->add_option("--methods", bench_methods, "all, none, or a comma list of hmm,crf-lbfgs,crf-arow,lstm")
      ->capture_default_str();
  bench->add_option("--runs", bench_cfg.runs, "Number of random splits")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--train-frac", bench_cfg.train_fraction, "Training fraction")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  bench->add_option("--seed", bench_cfg.master_seed, "Master seed")->capture_default_str();
  bench->add_option("--threads", bench_cfg.threads, "Runs executed in parallel")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "Report directory")->required();
  bench->add_flag("--quiet", bench_quiet, "No progress output");
  add_method_flags(bench, bench_cfg.method);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simgen) return cmd_simgen(sim, sim_out);
    if (*train) return cmd_train(train_method_name, train_data, train_seed, train_out, train_cfg, train_curve, train_quiet);
    if (*identify) return cmd_identify(id_model, id_data, id_episode, id_never);
    if (*bench) return cmd_benchmark(bench_data, bench_methods, bench_cfg, bench_out, bench_quiet);
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitDivergence;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
