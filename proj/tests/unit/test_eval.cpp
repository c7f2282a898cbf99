#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include <json.hpp>

#include "anomid/benchmark.hpp"
#include "anomid/error.hpp"
#include "anomid/model_io.hpp"
#include "anomid/simulator.hpp"

using namespace anomid;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "anomid_test_eval" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::array<int, kNumClasses> composition(std::span<const Episode> eps) {
  std::array<int, kNumClasses> n{};
  for (const auto& e : eps) ++n[index_of(e.case_label)];
  return n;
}

MethodConfig quick() {
  MethodConfig cfg;
  cfg.lstm.epochs = 3;
  cfg.lstm.hidden = 6;
  cfg.crf_lbfgs.lbfgs.max_iters = 15;
  cfg.crf_arow.epochs = 2;
  return cfg;
}

std::vector<Observation> obs_of(const Episode& ep) {
  std::vector<Observation> o;
  for (const auto& s : ep.samples) o.push_back(s.obs);
  return o;
}

}  // namespace

TEST_CASE("split sizes and stratification") {
  const auto data = generate_dataset(DatasetSpec{});
  const auto s = split_dataset(data, 0.8, 5);
  CHECK(s.train.size() == 96);
  CHECK(s.test.size() == 24);
  CHECK(s.warnings.empty());
  const auto tr = composition(s.train);
  const auto te = composition(s.test);
  for (auto c : kAnomalyClasses) {
    CHECK(tr[index_of(c)] > 0);
    CHECK(te[index_of(c)] > 0);
  }
  // Largest remainder over 49/39/32 * 0.8 = 39.2/31.2/25.6.
  CHECK(tr[index_of(AnomalyClass::Dis)] == 39);
  CHECK(tr[index_of(AnomalyClass::Unb)] == 31);
  CHECK(tr[index_of(AnomalyClass::Loc)] == 26);

  std::set<std::string> ids;
  for (const auto& e : s.train) ids.insert(e.id);
  for (const auto& e : s.test) CHECK(ids.insert(e.id).second);
  CHECK(ids.size() == data.size());

  const auto again = split_dataset(data, 0.8, 5);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK_FALSE(split_dataset(data, 0.8, 6).test == s.test);
}

TEST_CASE("split edge cases") {
  const auto data = generate_dataset({3, 1, 0, 0, 2});
  const auto s = split_dataset(data, 0.8, 1);
  CHECK(composition(s.train)[index_of(AnomalyClass::Unb)] == 1);
  CHECK(composition(s.test)[index_of(AnomalyClass::Unb)] == 0);
  CHECK(composition(s.test)[index_of(AnomalyClass::Dis)] >= 1);
  CHECK_FALSE(s.warnings.empty());
  CHECK_THROWS_AS(split_dataset(data, 1.5, 1), DataError);
}

TEST_CASE("model files round-trip") {
  const auto data = generate_dataset({4, 4, 4, 0, 3});
  const auto dir = temp_dir("models");
  for (auto m : kAllMethods) {
    CAPTURE(to_string(m));
    auto trained = train_method(m, data, quick(), 7);
    trained.model.dataset_fingerprint = dataset_fingerprint(data);
    const auto path = dir / fmt::format("{}.json", to_string(m));
    save_model(trained.model, path);
    const auto bytes = slurp(path);
    const auto loaded = load_model(path);
    CHECK(serialize_model(loaded) == bytes);
    CHECK(loaded.kind == m);
    CHECK(loaded.config == trained.model.config);
    CHECK(loaded.stats() == trained.model.stats());
    const auto before = make_labeler(trained.model);
    const auto after = make_labeler(loaded);
    for (const auto& ep : data) CHECK(after->label_sequence(obs_of(ep)) == before->label_sequence(obs_of(ep)));

    auto j = nlohmann::json::parse(bytes);
    j["version"] = kModelFormatVersion + 1;
    CHECK_THROWS_AS(parse_model(j.dump()), DataError);
    auto k = nlohmann::json::parse(bytes);
    k["kind"] = "svm";
    CHECK_THROWS_AS(parse_model(k.dump()), DataError);
  }
}

TEST_CASE("corrupt model files name the problem") {
  auto trained = train_method(MethodKind::CrfArow, generate_dataset({2, 2, 2, 0, 1}), quick(), 1);
  const auto text = serialize_model(trained.model);
  try {
    parse_model(text.substr(0, text.size() / 2));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  auto j = nlohmann::json::parse(text);
  j["params"]["weights"][0] = "x";
  try {
    parse_model(j.dump());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("weights") != std::string::npos);
  }
  CHECK_THROWS_AS(load_model("/nonexistent/model.json"), DataError);
}

TEST_CASE("dataset fingerprint") {
  const auto a = generate_dataset({2, 2, 2, 0, 1});
  const auto b = generate_dataset({2, 2, 2, 0, 2});
  CHECK(dataset_fingerprint(a) == dataset_fingerprint(a));
  CHECK(dataset_fingerprint(a) != dataset_fingerprint(b));
  CHECK(dataset_fingerprint(a).size() == 16);
}

TEST_CASE("benchmark report") {
  const auto data = generate_dataset({6, 5, 5, 0, 3});
  BenchmarkConfig cfg;
  cfg.method = quick();

  SUBCASE("no methods: summary only") {
    cfg.methods = {};
    cfg.runs = 1;
    const auto dir = temp_dir("none");
    emit_report(run_benchmark(data, cfg), dir);
    CHECK(listing(dir) == std::vector<std::string>{"summary.txt"});
  }
  SUBCASE("two methods: two metric tables and four matrices") {
    cfg.methods = {MethodKind::Hmm, MethodKind::CrfArow};
    cfg.runs = 2;
    const auto dir = temp_dir("two");
    const auto rep = run_benchmark(data, cfg);
    emit_report(rep, dir);
    CHECK(listing(dir) == std::vector<std::string>{"case_confusion_crf-arow.csv", "case_confusion_hmm.csv",
                                                   "metrics_crf-arow.csv", "metrics_hmm.csv",
                                                   "state_confusion_crf-arow.csv", "state_confusion_hmm.csv",
                                                   "summary.txt"});
    for (const auto& name : listing(dir)) CHECK(slurp(dir / name).rfind("# ", 0) == 0);
    // Each run labels every test episode exactly once.
    const auto& hmm = rep.method(MethodKind::Hmm);
    REQUIRE(hmm.runs.size() == 2);
    for (const auto& r : hmm.runs) {
      CHECK(r.cases.total() == r.episodes.size());
      std::uint64_t steps = 0;
      for (const auto& e : r.episodes) steps += e.labels.size();
      CHECK(r.state.total() == steps);
    }
    CHECK(hmm.case_total.total() == hmm.runs[0].cases.total() + hmm.runs[1].cases.total());
  }
  SUBCASE("identical configuration gives identical files") {
    cfg.methods = {MethodKind::CrfLbfgs, MethodKind::Lstm};
    cfg.runs = 2;
    const auto d1 = temp_dir("rep1");
    const auto d2 = temp_dir("rep2");
    emit_report(run_benchmark(data, cfg), d1);
    cfg.threads = 2;
    emit_report(run_benchmark(data, cfg), d2);
    REQUIRE(listing(d1) == listing(d2));
    CHECK(listing(d1).size() == 8);
    for (const auto& name : listing(d1)) CHECK(slurp(d1 / name) == slurp(d2 / name));
  }
  SUBCASE("a single run has zero spread") {
    cfg.methods = {MethodKind::Lstm};
    cfg.runs = 1;
    const auto rep = run_benchmark(data, cfg);
    REQUIRE(rep.methods.size() == 1);
    const auto& mr = rep.methods[0];
    CHECK(mr.overall.f.std == 0.0);
    CHECK(mr.overall.precision.std == 0.0);
    CHECK(mr.micro_f.std == 0.0);
    for (const auto& pc : mr.per_class) {
      CHECK(pc.f.std == 0.0);
      CHECK(pc.recall.std == 0.0);
    }
  }
  SUBCASE("a failing method is recorded, not fatal") {
    cfg.methods = {MethodKind::Lstm};
    cfg.runs = 2;
    cfg.method.lstm.hidden = 0;
    const auto rep = run_benchmark(data, cfg);
    CHECK(rep.methods[0].failed_runs == 2);
    for (const auto& r : rep.methods[0].runs) {
      CHECK(r.failed);
      CHECK_FALSE(r.error.empty());
    }
  }
}
