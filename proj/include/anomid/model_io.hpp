#pragma once

// Self-contained model files (JSON): method kind, featurizer statistics,
// parameters, the training configuration and a fingerprint of the training data.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>

#include "anomid/crf.hpp"
#include "anomid/episode.hpp"
#include "anomid/hmm.hpp"
#include "anomid/lstm.hpp"
#include "anomid/pipeline.hpp"

namespace anomid {

inline constexpr int kModelFormatVersion = 1;

enum class MethodKind : std::uint8_t { Hmm = 0, CrfLbfgs = 1, CrfArow = 2, Lstm = 3 };
inline constexpr std::array<MethodKind, 4> kAllMethods = {MethodKind::Hmm, MethodKind::CrfLbfgs,
                                                          MethodKind::CrfArow, MethodKind::Lstm};

// "hmm", "crf-lbfgs", "crf-arow", "lstm"
std::string_view to_string(MethodKind m);
MethodKind parse_method_kind(std::string_view s);

struct ModelFile {
  MethodKind kind = MethodKind::Hmm;
  std::variant<HmmBank, CrfModel, LstmModel> model;
  std::map<std::string, std::string> config;
  std::string dataset_fingerprint;

  const FeaturizerStats& stats() const;
};

// FNV-1a (64-bit, hex) over the serialized episodes, one per line.
std::string dataset_fingerprint(std::span<const Episode> episodes);

std::string serialize_model(const ModelFile& model);
// Throws DataError naming the offending field or the parse offset.
ModelFile parse_model(std::string_view text);

void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

std::unique_ptr<Labeler> make_labeler(const ModelFile& model);

}  // namespace anomid
