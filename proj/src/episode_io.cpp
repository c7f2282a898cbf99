#include "anomid/episode_io.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "anomid/error.hpp"

namespace anomid {

using nlohmann::json;

namespace {

void require_finite(double v, std::string_view field, const Episode& ep) {
  if (!std::isfinite(v)) {
    throw DataError(fmt::format("episode '{}': non-finite {}", ep.id, field));
  }
}

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw DataError(fmt::format("missing field '{}'", name));
  return *it;
}

template <typename T>
T get_as(const json& obj, const char* name) {
  const json& v = field(obj, name);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw DataError(fmt::format("field '{}' has the wrong type", name));
  }
}

std::optional<int> optional_int(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw DataError(fmt::format("field '{}' must be an integer", name));
  return it->get<int>();
}

}  // namespace

json episode_to_json(const Episode& ep) {
  json samples = json::array();
  for (const auto& s : ep.samples) {
    const auto& o = s.obs;
    require_finite(o.laser_distance_m, "laser_distance_m", ep);
    require_finite(o.gripper_position, "gripper_position", ep);
    require_finite(o.gripper_force, "gripper_force", ep);
    require_finite(o.target_offset_m, "target_offset_m", ep);
    samples.push_back(json{
        {"t", o.t},
        {"laser_distance_m", o.laser_distance_m},
        {"gripper_position", o.gripper_position},
        {"gripper_force", o.gripper_force},
        {"sound", to_string(o.sound)},
        {"target_existence", to_string(o.target_existence)},
        {"target_offset_m", o.target_offset_m},
        {"action", to_string(o.action_phase.action)},
        {"phase", o.action_phase.phase_index},
        {"label", to_string(s.label)},
    });
  }
  json plan = json::array();
  for (auto a : ep.plan) plan.push_back(to_string(a));
  return json{
      {"version", kEpisodeFormatVersion},
      {"id", ep.id},
      {"case_label", to_string(ep.case_label)},
      {"plan", std::move(plan)},
      {"anomaly_onset", ep.anomaly_onset ? json(*ep.anomaly_onset) : json(nullptr)},
      {"detection_step", ep.detection_step ? json(*ep.detection_step) : json(nullptr)},
      {"samples", std::move(samples)},
  };
}

Episode episode_from_json(const json& rec) {
  if (!rec.is_object()) throw DataError("record is not a JSON object");
  const int version = get_as<int>(rec, "version");
  if (version != kEpisodeFormatVersion) {
    throw DataError(fmt::format("unsupported episode format version {} (expected {})", version,
                                kEpisodeFormatVersion));
  }
  Episode ep;
  ep.id = get_as<std::string>(rec, "id");
  ep.case_label = parse_anomaly_class(get_as<std::string>(rec, "case_label"));
  for (const auto& a : field(rec, "plan")) {
    if (!a.is_string()) throw DataError("plan entries must be strings");
    ep.plan.push_back(parse_action_kind(a.get<std::string>()));
  }
  ep.anomaly_onset = optional_int(rec, "anomaly_onset");
  ep.detection_step = optional_int(rec, "detection_step");
  const json& samples = field(rec, "samples");
  if (!samples.is_array()) throw DataError("field 'samples' must be an array");
  ep.samples.reserve(samples.size());
  for (const auto& js : samples) {
    Sample s;
    s.obs.t = get_as<int>(js, "t");
    s.obs.laser_distance_m = get_as<double>(js, "laser_distance_m");
    s.obs.gripper_position = get_as<double>(js, "gripper_position");
    s.obs.gripper_force = get_as<double>(js, "gripper_force");
    s.obs.sound = parse_sound_class(get_as<std::string>(js, "sound"));
    s.obs.target_existence = parse_existence(get_as<std::string>(js, "target_existence"));
    s.obs.target_offset_m = get_as<double>(js, "target_offset_m");
    s.obs.action_phase.action = parse_action_kind(get_as<std::string>(js, "action"));
    s.obs.action_phase.phase_index = get_as<int>(js, "phase");
    s.label = parse_anomaly_class(get_as<std::string>(js, "label"));
    ep.samples.push_back(s);
  }
  validate(ep);
  return ep;
}

std::string serialize_episode(const Episode& episode) { return episode_to_json(episode).dump(); }

void write_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path) {
  std::string buffer;
  for (const auto& ep : episodes) {
    buffer += serialize_episode(ep);
    buffer += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << buffer;
  out.flush();
  if (!out) throw DataError(fmt::format("write to '{}' failed", path.string()));
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}' for reading", path.string()));
  std::vector<Episode> episodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      episodes.push_back(episode_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: malformed record: {}", path.string(), line_no, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return episodes;
}

}  // namespace anomid
