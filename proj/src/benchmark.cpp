#include "anomid/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "anomid/error.hpp"
#include "anomid/features.hpp"
#include "anomid/hmm.hpp"
#include "anomid/pipeline.hpp"
#include "anomid/simulator.hpp"

namespace anomid {

SplitResult split_dataset(std::span<const Episode> dataset, double train_fraction, std::uint64_t seed) {
  if (dataset.empty()) throw DataError("split: empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DataError("split: train fraction must be in (0, 1)");
  SplitResult out;

  std::array<std::vector<std::size_t>, kNumClasses> members;
  for (std::size_t i = 0; i < dataset.size(); ++i) members[index_of(dataset[i].case_label)].push_back(i);

  // Largest-remainder allocation of the train quota across classes.
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(dataset.size()) * train_fraction));
  std::array<std::size_t, kNumClasses> quota{};
  std::array<double, kNumClasses> remainder{};
  std::size_t allocated = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = static_cast<double>(members[c].size()) * train_fraction;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    allocated += quota[c];
  }
  std::array<std::size_t, kNumClasses> by_remainder{};
  std::iota(by_remainder.begin(), by_remainder.end(), 0);
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; allocated < target && k < kNumClasses; ++k) {
    const auto c = by_remainder[k];
    if (quota[c] < members[c].size()) {
      ++quota[c];
      ++allocated;
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<bool> in_train(dataset.size(), false);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& idx = members[c];
    const auto n = idx.size();
    if (n == 0) continue;
    if (n == 1) {
      out.warnings.push_back(fmt::format("class {} has a single episode; it is placed in train",
                                         to_string(static_cast<AnomalyClass>(c))));
      quota[c] = 1;
    } else {
      quota[c] = std::clamp<std::size_t>(quota[c], 1, n - 1);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < quota[c]; ++k) in_train[idx[k]] = true;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) (in_train[i] ? out.train : out.test).push_back(dataset[i]);
  return out;
}

std::map<std::string, std::string> describe(MethodKind method, const MethodConfig& cfg, std::uint64_t seed) {
  std::map<std::string, std::string> out{{"method", std::string(to_string(method))}, {"seed", fmt::format("{}", seed)}};
  switch (method) {
    case MethodKind::Hmm: out["smoothing"] = fmt::format("{}", cfg.hmm_smoothing); break;
    case MethodKind::CrfLbfgs:
      out["l2"] = fmt::format("{}", cfg.crf_lbfgs.l2);
      out["max_iters"] = fmt::format("{}", cfg.crf_lbfgs.lbfgs.max_iters);
      out["memory"] = fmt::format("{}", cfg.crf_lbfgs.lbfgs.memory);
      out["grad_tol"] = fmt::format("{}", cfg.crf_lbfgs.lbfgs.grad_tol);
      out["c1"] = fmt::format("{}", cfg.crf_lbfgs.lbfgs.c1);
      out["c2"] = fmt::format("{}", cfg.crf_lbfgs.lbfgs.c2);
      break;
    case MethodKind::CrfArow:
      out["r"] = fmt::format("{}", cfg.crf_arow.r);
      out["epochs"] = fmt::format("{}", cfg.crf_arow.epochs);
      break;
    case MethodKind::Lstm:
      out["epochs"] = fmt::format("{}", cfg.lstm.epochs);
      out["lr"] = fmt::format("{}", cfg.lstm.lr);
      out["hidden"] = fmt::format("{}", cfg.lstm.hidden);
      out["grad_clip"] = fmt::format("{}", cfg.lstm.grad_clip);
      break;
  }
  return out;
}

TrainedMethod train_method(MethodKind method, std::span<const Episode> train, const MethodConfig& cfg,
                           std::uint64_t seed, const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("training set is empty");
  const auto stats = fit_stats(train);
  TrainedMethod out;
  out.model.kind = method;
  out.model.config = describe(method, cfg, seed);
  out.model.dataset_fingerprint = dataset_fingerprint(train);
  switch (method) {
    case MethodKind::Hmm: out.model.model = fit_supervised(train, stats, cfg.hmm_smoothing); break;
    case MethodKind::CrfLbfgs: {
      CrfTrainReport rep;
      out.model.model = train_lbfgs(train, stats, cfg.crf_lbfgs, &rep);
      if (rep.warning) {
        out.warnings.push_back(fmt::format("crf-lbfgs: line search failed after {} iterations; kept best weights",
                                           rep.iterations));
      }
      break;
    }
    case MethodKind::CrfArow: {
      auto arow = cfg.crf_arow;
      arow.shuffle_seed = seed;
      out.model.model = train_arow(train, stats, arow);
      break;
    }
    case MethodKind::Lstm: {
      auto lstm = cfg.lstm;
      lstm.init_seed = seed;
      auto res = train_lstm(train, stats, lstm, on_epoch);
      out.model.model = std::move(res.model);
      out.curve = std::move(res.curve);
      break;
    }
  }
  return out;
}

RunResult evaluate(const Labeler& labeler, std::span<const Episode> test) {
  RunResult res;
  for (const auto& ep : test) {
    ReplayDetector detector(ep);
    const auto id = run_episode(labeler, detector, ep);
    EpisodeOutcome o;
    o.id = ep.id;
    o.gold_case = ep.case_label;
    o.predicted_case = id.final_class;
    o.labels = id.labels;
    o.votes = id.votes;
    o.detection_step = id.detection_step;
    o.gold_labels.reserve(id.labels.size());
    for (std::size_t t = 0; t < id.labels.size(); ++t) o.gold_labels.push_back(ep.samples[t].label);
    res.state.add(o.gold_labels, o.labels);
    if (is_anomaly(ep.case_label)) res.cases.add(ep.case_label, o.predicted_case);
    res.episodes.push_back(std::move(o));
  }
  res.metrics = compute_metrics(res.state);
  return res;
}

const MethodReport& BenchmarkReport::method(MethodKind m) const {
  for (const auto& r : methods) {
    if (r.method == m) return r;
  }
  throw DataError(fmt::format("report has no method {}", to_string(m)));
}

namespace {

std::size_t method_slot(MethodKind m) { return static_cast<std::size_t>(m); }

ScoreSummary summarize(const std::vector<ClassScore>& scores) {
  std::vector<double> p, r, f;
  for (const auto& s : scores) {
    p.push_back(s.precision);
    r.push_back(s.recall);
    f.push_back(s.f);
  }
  return {mean_std(p), mean_std(r), mean_std(f)};
}

void aggregate(MethodReport& rep) {
  std::array<std::vector<ClassScore>, kNumClasses> per_class;
  std::vector<ClassScore> overall, overall_anomaly;
  std::vector<double> micro;
  for (const auto& run : rep.runs) {
    if (run.failed) {
      ++rep.failed_runs;
      continue;
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) per_class[c].push_back(run.metrics.per_class[c]);
    overall.push_back(run.metrics.overall);
    overall_anomaly.push_back(run.metrics.overall_anomaly);
    micro.push_back(run.metrics.micro_f);
    rep.state_total.merge(run.state);
    rep.case_total.merge(run.cases);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) rep.per_class[c] = summarize(per_class[c]);
  rep.overall = summarize(overall);
  rep.overall_anomaly = summarize(overall_anomaly);
  rep.micro_f = mean_std(micro);
}

}  // namespace

BenchmarkReport run_benchmark(std::span<const Episode> dataset, const BenchmarkConfig& cfg,
                              const ProgressCallback& progress) {
  if (cfg.runs < 1) throw DataError("benchmark: runs must be >= 1");
  for (auto cls : kAnomalyClasses) {
    if (std::none_of(dataset.begin(), dataset.end(), [cls](const Episode& e) { return e.case_label == cls; })) {
      throw DataError(fmt::format("benchmark: dataset has no {} episodes", to_string(cls)));
    }
  }
  BenchmarkReport report;
  report.config = cfg;
  report.dataset_fingerprint = dataset_fingerprint(dataset);
  report.dataset_size = dataset.size();
  for (int r = 0; r < cfg.runs; ++r) report.run_seeds.push_back(derive_seed(cfg.master_seed, static_cast<std::uint64_t>(r)));
  for (auto m : cfg.methods) {
    MethodReport mr;
    mr.method = m;
    mr.runs.resize(static_cast<std::size_t>(cfg.runs));
    report.methods.push_back(std::move(mr));
  }

  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };

  auto do_run = [&](int r) {
    const auto run_seed = report.run_seeds[static_cast<std::size_t>(r)];
    const auto split = split_dataset(dataset, cfg.train_fraction, derive_seed(run_seed, 0));
    for (auto& mr : report.methods) {
      auto& res = mr.runs[static_cast<std::size_t>(r)];
      const auto seed = derive_seed(run_seed, 1 + method_slot(mr.method));
      try {
        auto trained = train_method(mr.method, split.train, cfg.method, seed);
        const auto labeler = make_labeler(trained.model);
        res = evaluate(*labeler, split.test);
        res.curve = std::move(trained.curve);
        res.warnings = split.warnings;
        res.warnings.insert(res.warnings.end(), trained.warnings.begin(), trained.warnings.end());
      } catch (const Error& e) {
        res = RunResult{};
        res.failed = true;
        res.error = e.what();
      }
      res.run = r;
      res.seed = seed;
      log(fmt::format("run {} {}: {}", r, to_string(mr.method),
                      res.failed ? "FAILED: " + res.error : fmt::format("overall F {:.4f}", res.metrics.overall.f)));
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.runs)));
  if (threads == 1) {
    for (int r = 0; r < cfg.runs; ++r) do_run(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int r = next++; r < cfg.runs; r = next++) do_run(r);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& mr : report.methods) aggregate(mr);
  return report;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  if (!out) throw DataError(fmt::format("failed writing {}", path.string()));
}

std::string header(const BenchmarkReport& rep) {
  const auto& c = rep.config;
  std::string h;
  h += fmt::format("# dataset_fingerprint {} episodes {}\n", rep.dataset_fingerprint, rep.dataset_size);
  h += fmt::format("# runs {} train_fraction {} master_seed {}\n", c.runs, c.train_fraction, c.master_seed);
  std::string seeds;
  for (auto s : rep.run_seeds) seeds += fmt::format(" {}", s);
  h += fmt::format("# run_seeds{}\n", seeds);
  for (auto m : c.methods) {
    std::string line = fmt::format("# config {}", to_string(m));
    for (const auto& [k, v] : describe(m, c.method, 0)) {
      if (k != "method" && k != "seed") line += fmt::format(" {}={}", k, v);
    }
    h += line + "\n";
  }
  return h;
}

std::string fixed(double v) { return fmt::format("{:.6f}", v); }

std::string metrics_csv(const BenchmarkReport& rep, const MethodReport& mr) {
  std::string s = header(rep);
  s += "class,precision_mean,precision_std,recall_mean,recall_std,f_mean,f_std\n";
  auto row = [&s](std::string_view name, const ScoreSummary& x) {
    s += fmt::format("{},{},{},{},{},{},{}\n", name, fixed(x.precision.mean), fixed(x.precision.std),
                     fixed(x.recall.mean), fixed(x.recall.std), fixed(x.f.mean), fixed(x.f.std));
  };
  for (auto c : kAllClasses) row(to_string(c), mr.per_class[index_of(c)]);
  row("overall", mr.overall);
  row("overall_anomaly", mr.overall_anomaly);
  s += fmt::format("micro,,,,,{},{}\n", fixed(mr.micro_f.mean), fixed(mr.micro_f.std));
  return s;
}

std::string state_csv(const BenchmarkReport& rep, const MethodReport& mr) {
  std::string s = header(rep);
  s += "# rows: gold, columns: predicted, row-normalized over all successful runs\n";
  s += "gold,SAFE,LOC,DIS,UNB\n";
  const auto norm = mr.state_total.row_normalized();
  for (auto g : kAllClasses) {
    s += std::string(to_string(g));
    for (std::size_t p = 0; p < kNumClasses; ++p) s += "," + fixed(norm[index_of(g)][p]);
    s += "\n";
  }
  return s;
}

std::string case_csv(const BenchmarkReport& rep, const MethodReport& mr) {
  std::string s = header(rep);
  s += "# rows: gold case, columns: predicted case, episode counts over all successful runs;"
       " SAFE is the spill column\n";
  s += "gold,LOC,DIS,UNB,SAFE\n";
  for (std::size_t g = 0; g < 3; ++g) {
    s += std::string(to_string(kAnomalyClasses[g]));
    for (std::size_t p = 0; p < 4; ++p) s += fmt::format(",{}", mr.case_total.counts[g][p]);
    s += "\n";
  }
  return s;
}

std::string curve_csv(const BenchmarkReport& rep, const MethodReport& mr) {
  std::string s = header(rep);
  s += "run,epoch,loss,f_score\n";
  for (const auto& run : mr.runs) {
    for (const auto& e : run.curve) s += fmt::format("{},{},{},{}\n", run.run, e.epoch, fixed(e.loss), fixed(e.f_score));
  }
  return s;
}

std::string summary_txt(const BenchmarkReport& rep) {
  std::string s = header(rep);
  if (rep.methods.empty()) {
    s += "no methods benchmarked\n";
    return s;
  }
  s += fmt::format("{:<10} {:>16} {:>16} {:>16} {:>16} {:>16} {:>16}\n", "method", "SAFE F", "LOC F", "DIS F",
                   "UNB F", "overall F", "anomaly F");
  for (const auto& mr : rep.methods) {
    auto cell = [](const MeanStd& x) { return fmt::format("{:.3f} +- {:.3f}", x.mean, x.std); };
    s += fmt::format("{:<10} {:>16} {:>16} {:>16} {:>16} {:>16} {:>16}\n", to_string(mr.method),
                     cell(mr.per_class[0].f), cell(mr.per_class[1].f), cell(mr.per_class[2].f),
                     cell(mr.per_class[3].f), cell(mr.overall.f), cell(mr.overall_anomaly.f));
  }
  s += "\ncase accuracy (LOC DIS UNB), SAFE spill count\n";
  for (const auto& mr : rep.methods) {
    s += fmt::format("{:<10} {:.3f} {:.3f} {:.3f} spill {}\n", to_string(mr.method),
                     mr.case_total.accuracy(AnomalyClass::Loc), mr.case_total.accuracy(AnomalyClass::Dis),
                     mr.case_total.accuracy(AnomalyClass::Unb), mr.case_total.spill());
  }
  for (const auto& mr : rep.methods) {
    for (const auto& run : mr.runs) {
      if (run.failed) s += fmt::format("FAILED {} run {}: {}\n", to_string(mr.method), run.run, run.error);
      for (const auto& w : run.warnings) s += fmt::format("warning {} run {}: {}\n", to_string(mr.method), run.run, w);
    }
  }
  return s;
}

}  // namespace

void emit_report(const BenchmarkReport& rep, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  write_file(out_dir / "summary.txt", summary_txt(rep));
  for (const auto& mr : rep.methods) {
    const std::string m(to_string(mr.method));
    write_file(out_dir / fmt::format("metrics_{}.csv", m), metrics_csv(rep, mr));
    write_file(out_dir / fmt::format("state_confusion_{}.csv", m), state_csv(rep, mr));
    write_file(out_dir / fmt::format("case_confusion_{}.csv", m), case_csv(rep, mr));
    if (mr.method == MethodKind::Lstm) write_file(out_dir / "loss_curve_lstm.csv", curve_csv(rep, mr));
  }
}

}  // namespace anomid
