#pragma once

// Episode files: one JSON object per line. See docs/file-formats.md for the
// field names; they are a stable contract.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "anomid/episode.hpp"

namespace anomid {

inline constexpr int kEpisodeFormatVersion = 1;

nlohmann::json episode_to_json(const Episode& episode);
// Validates the result; throws DataError on schema or invariant violations.
Episode episode_from_json(const nlohmann::json& record);

std::string serialize_episode(const Episode& episode);

void write_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path);
std::vector<Episode> read_episodes(const std::filesystem::path& path);

}  // namespace anomid
