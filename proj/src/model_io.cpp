#include "anomid/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "anomid/episode_io.hpp"
#include "anomid/error.hpp"

namespace anomid {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kMethodNames = {"hmm", "crf-lbfgs", "crf-arow", "lstm"};
constexpr std::array<std::string_view, kNumContinuous> kContinuousNames = {"laser", "gripper_position",
                                                                           "gripper_force", "offset"};

// A JSON value together with its location in the document, for error messages.
struct Node {
  const json& value;
  std::string path;

  Node at(std::string_view key) const {
    if (!value.is_object()) throw DataError(fmt::format("model file: '{}' must be an object", path));
    auto it = value.find(std::string(key));
    const std::string sub = path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
    if (it == value.end()) throw DataError(fmt::format("model file: missing field '{}'", sub));
    return {*it, sub};
  }
  Node at(std::size_t i) const { return {value.at(i), fmt::format("{}[{}]", path, i)}; }

  std::size_t array_size(std::optional<std::size_t> expected = std::nullopt) const {
    if (!value.is_array()) throw DataError(fmt::format("model file: '{}' must be an array", path));
    if (expected && value.size() != *expected) {
      throw DataError(fmt::format("model file: '{}' has {} entries, expected {}", path, value.size(), *expected));
    }
    return value.size();
  }
  double number() const {
    if (!value.is_number()) throw DataError(fmt::format("model file: '{}' must be a number", path));
    const double v = value.get<double>();
    if (!std::isfinite(v)) throw DataError(fmt::format("model file: '{}' is not finite", path));
    return v;
  }
  std::int64_t integer() const {
    if (!value.is_number_integer()) throw DataError(fmt::format("model file: '{}' must be an integer", path));
    return value.get<std::int64_t>();
  }
  bool boolean() const {
    if (!value.is_boolean()) throw DataError(fmt::format("model file: '{}' must be a boolean", path));
    return value.get<bool>();
  }
  std::string string() const {
    if (!value.is_string()) throw DataError(fmt::format("model file: '{}' must be a string", path));
    return value.get<std::string>();
  }
  std::vector<double> numbers(std::optional<std::size_t> expected = std::nullopt) const {
    const auto n = array_size(expected);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = at(i).number();
    return out;
  }
  // Rethrows library errors (wrong enum names, bad shapes) with the path attached.
  template <typename F>
  auto with_path(F&& f) const {
    try {
      return f();
    } catch (const DataError& e) {
      throw DataError(fmt::format("model file: '{}': {}", path, e.what()));
    }
  }
};

json stats_to_json(const FeaturizerStats& stats) {
  json out = json::object();
  for (std::size_t c = 0; c < kNumContinuous; ++c) {
    const auto& ch = stats.channels[c];
    out[std::string(kContinuousNames[c])] = json{
        {"min", ch.min}, {"max", ch.max}, {"constant", ch.constant}, {"cuts", ch.cuts}};
  }
  return out;
}

FeaturizerStats stats_from_json(const Node& node) {
  FeaturizerStats stats;
  for (std::size_t c = 0; c < kNumContinuous; ++c) {
    const Node ch = node.at(kContinuousNames[c]);
    auto& out = stats.channels[c];
    out.min = ch.at("min").number();
    out.max = ch.at("max").number();
    out.constant = ch.at("constant").boolean();
    const auto cuts = ch.at("cuts").numbers(kNumBins - 1);
    std::copy(cuts.begin(), cuts.end(), out.cuts.begin());
    if (out.max < out.min) throw DataError(fmt::format("model file: '{}' has max < min", ch.path));
    if (!out.constant) {
      for (std::size_t i = 1; i < cuts.size(); ++i) {
        if (!(cuts[i] > cuts[i - 1])) {
          throw DataError(fmt::format("model file: '{}.cuts' must be strictly increasing", ch.path));
        }
      }
    }
  }
  return stats;
}

json hmm_to_json(const HmmBank& bank) {
  json models = json::array();
  for (const auto& m : bank.models) {
    json emission = json::array();
    for (std::size_t s = 0; s < kNumHiddenStates; ++s) {
      json per = json::object();
      for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) per[kChannelNames[c]] = m.emission[s][c];
      emission.push_back(std::move(per));
    }
    models.push_back(json{{"class", to_string(m.anomaly_class)},
                          {"initial", m.initial},
                          {"transition", m.transition},
                          {"emission", std::move(emission)}});
  }
  return json{{"models", std::move(models)}};
}

HmmBank hmm_from_json(const Node& node, const FeaturizerStats& stats) {
  HmmBank bank;
  bank.stats = stats;
  const Node models = node.at("models");
  const auto n = models.array_size();
  for (std::size_t k = 0; k < n; ++k) {
    const Node mj = models.at(k);
    HmmModel m;
    const Node cls = mj.at("class");
    m.anomaly_class = cls.with_path([&] { return parse_anomaly_class(cls.string()); });
    const auto init = mj.at("initial").numbers(kNumHiddenStates);
    std::copy(init.begin(), init.end(), m.initial.begin());
    const Node trans = mj.at("transition");
    trans.array_size(kNumHiddenStates);
    for (std::size_t i = 0; i < kNumHiddenStates; ++i) {
      const auto row = trans.at(i).numbers(kNumHiddenStates);
      std::copy(row.begin(), row.end(), m.transition[i].begin());
    }
    const Node emission = mj.at("emission");
    emission.array_size(kNumHiddenStates);
    for (std::size_t s = 0; s < kNumHiddenStates; ++s) {
      for (std::size_t c = 0; c < kNumDiscreteChannels; ++c) {
        m.emission[s][c] = emission.at(s).at(kChannelNames[c]).numbers(kChannelCardinality[c]);
      }
    }
    mj.with_path([&] { validate(m); return 0; });
    for (const auto& other : bank.models) {
      if (other.anomaly_class == m.anomaly_class) {
        throw DataError(fmt::format("model file: '{}' repeats class {}", mj.path, to_string(m.anomaly_class)));
      }
    }
    bank.models.push_back(std::move(m));
  }
  for (auto cls : kAnomalyClasses) node.with_path([&] { return &bank.model_for(cls); });
  return bank;
}

json crf_to_json(const CrfModel& m) {
  json features = json::array();
  for (const auto& f : m.index.features()) features.push_back(feature_identity(f));
  return json{{"features", std::move(features)}, {"weights", m.weights}};
}

CrfModel crf_from_json(const Node& node, const FeaturizerStats& stats) {
  const Node fj = node.at("features");
  const auto n = fj.array_size();
  std::vector<CrfFeature> features;
  features.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Node f = fj.at(i);
    features.push_back(f.with_path([&] { return parse_feature_identity(f.string()); }));
  }
  CrfModel m;
  m.index = fj.with_path([&] { return CrfFeatureIndex::from_features(features); });
  if (!(m.index.features() == features)) {
    throw DataError(fmt::format("model file: '{}' is not in canonical order", fj.path));
  }
  m.weights = node.at("weights").numbers(n);
  m.stats = stats;
  return m;
}

json lstm_to_json(const LstmModel& model) {
  const auto& p = model.params;
  const std::size_t H = p.hidden(), I = p.input();
  json w = json::array(), u = json::array(), b = json::array(), v = json::array(), d = json::array();
  for (std::size_t g = 0; g < kNumGates; ++g) {
    const auto gate = static_cast<LstmGate>(g);
    for (std::size_t r = 0; r < H; ++r) {
      json wr = json::array(), ur = json::array();
      for (std::size_t c = 0; c < H; ++c) wr.push_back(p.w_at(gate, r, c));
      for (std::size_t c = 0; c < I; ++c) ur.push_back(p.u_at(gate, r, c));
      w.push_back(std::move(wr));
      u.push_back(std::move(ur));
      b.push_back(p.b_at(gate, r));
    }
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    json vr = json::array();
    for (std::size_t r = 0; r < H; ++r) vr.push_back(p.v_at(k, r));
    v.push_back(std::move(vr));
    d.push_back(p.d_at(k));
  }
  return json{{"hidden", H}, {"input", I}, {"gate_order", "f,i,g,o"},
              {"W", std::move(w)}, {"U", std::move(u)}, {"b", std::move(b)}, {"V", std::move(v)}, {"d", std::move(d)}};
}

LstmModel lstm_from_json(const Node& node, const FeaturizerStats& stats) {
  const auto H = node.at("hidden").integer();
  const auto I = node.at("input").integer();
  if (H < 1 || H > 4096) throw DataError("model file: 'params.hidden' out of range");
  if (I != static_cast<std::int64_t>(kFeatureWidth)) {
    throw DataError(fmt::format("model file: 'params.input' must be {}", kFeatureWidth));
  }
  const Node order = node.at("gate_order");
  if (order.string() != "f,i,g,o") throw DataError("model file: unsupported 'params.gate_order'");
  const auto h = static_cast<std::size_t>(H), in = static_cast<std::size_t>(I);
  LstmModel model;
  model.stats = stats;
  auto& p = model.params;
  p = LstmParams(h, in);
  const Node w = node.at("W"), u = node.at("U");
  w.array_size(kNumGates * h);
  u.array_size(kNumGates * h);
  const auto b = node.at("b").numbers(kNumGates * h);
  for (std::size_t g = 0; g < kNumGates; ++g) {
    const auto gate = static_cast<LstmGate>(g);
    for (std::size_t r = 0; r < h; ++r) {
      const auto wr = w.at(g * h + r).numbers(h);
      const auto ur = u.at(g * h + r).numbers(in);
      for (std::size_t c = 0; c < h; ++c) p.w_at(gate, r, c) = wr[c];
      for (std::size_t c = 0; c < in; ++c) p.u_at(gate, r, c) = ur[c];
      p.b_at(gate, r) = b[g * h + r];
    }
  }
  const Node v = node.at("V");
  v.array_size(kNumClasses);
  const auto d = node.at("d").numbers(kNumClasses);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const auto vr = v.at(k).numbers(h);
    for (std::size_t r = 0; r < h; ++r) p.v_at(k, r) = vr[r];
    p.d_at(k) = d[k];
  }
  return model;
}

}  // namespace

std::string_view to_string(MethodKind m) { return kMethodNames[static_cast<std::size_t>(m)]; }

MethodKind parse_method_kind(std::string_view s) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (s == kMethodNames[i]) return static_cast<MethodKind>(i);
  }
  throw DataError(fmt::format("unknown method '{}'", s));
}

const FeaturizerStats& ModelFile::stats() const {
  return std::visit([](const auto& m) -> const FeaturizerStats& { return m.stats; }, model);
}

std::string dataset_fingerprint(std::span<const Episode> episodes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& ep : episodes) {
    feed(serialize_episode(ep));
    feed("\n");
  }
  return fmt::format("{:016x}", h);
}

std::string serialize_model(const ModelFile& mf) {
  json params;
  switch (mf.kind) {
    case MethodKind::Hmm: params = hmm_to_json(std::get<HmmBank>(mf.model)); break;
    case MethodKind::CrfLbfgs:
    case MethodKind::CrfArow: params = crf_to_json(std::get<CrfModel>(mf.model)); break;
    case MethodKind::Lstm: params = lstm_to_json(std::get<LstmModel>(mf.model)); break;
  }
  json config = json::object();
  for (const auto& [k, v] : mf.config) config[k] = v;
  const json doc{{"format", "anomid-model"},
                 {"version", kModelFormatVersion},
                 {"kind", to_string(mf.kind)},
                 {"stats", stats_to_json(mf.stats())},
                 {"params", std::move(params)},
                 {"config", std::move(config)},
                 {"dataset_fingerprint", mf.dataset_fingerprint}};
  return doc.dump(1) + "\n";
}

ModelFile parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("model file: parse error at byte {}: {}", e.byte, e.what()));
  }
  const Node root{doc, ""};
  if (root.at("format").string() != "anomid-model") throw DataError("model file: 'format' is not anomid-model");
  const auto version = root.at("version").integer();
  if (version != kModelFormatVersion) {
    throw DataError(fmt::format("model file: unsupported version {} (expected {})", version, kModelFormatVersion));
  }
  ModelFile mf;
  const Node kind = root.at("kind");
  mf.kind = kind.with_path([&] { return parse_method_kind(kind.string()); });
  const auto stats = stats_from_json(root.at("stats"));
  const Node params = root.at("params");
  switch (mf.kind) {
    case MethodKind::Hmm: mf.model = hmm_from_json(params, stats); break;
    case MethodKind::CrfLbfgs:
    case MethodKind::CrfArow: mf.model = crf_from_json(params, stats); break;
    case MethodKind::Lstm: mf.model = lstm_from_json(params, stats); break;
  }
  const Node config = root.at("config");
  if (!config.value.is_object()) throw DataError("model file: 'config' must be an object");
  for (const auto& [k, v] : config.value.items()) mf.config[k] = Node{v, "config." + k}.string();
  mf.dataset_fingerprint = root.at("dataset_fingerprint").string();
  return mf;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  const auto text = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  if (!out) throw DataError(fmt::format("failed writing {}", path.string()));
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str());
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::unique_ptr<Labeler> make_labeler(const ModelFile& mf) {
  switch (mf.kind) {
    case MethodKind::Hmm: return std::make_unique<HmmLabeler>(std::get<HmmBank>(mf.model));
    case MethodKind::CrfLbfgs:
    case MethodKind::CrfArow:
      return std::make_unique<CrfLabeler>(std::get<CrfModel>(mf.model), std::string(to_string(mf.kind)));
    case MethodKind::Lstm: return std::make_unique<LstmLabeler>(std::get<LstmModel>(mf.model));
  }
  throw DataError("unknown model kind");
}

}  // namespace anomid
