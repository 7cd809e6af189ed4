#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "noisegeom/error.hpp"
#include "noisegeom/linalg.hpp"

namespace noisegeom {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolName = "noisegeom";
inline constexpr const char* kToolVersion = "1.0.0";

/// Stream ids derived from the master seed.
inline constexpr std::uint64_t kDataStream = 0;
inline constexpr std::uint64_t kThetaStream = 1;
inline constexpr std::uint64_t kOptimizerStreamBase = 2;

/// One experiment: either a named preset or explicit blocks, plus the master seed.
/// Blocks are keyed "data", "model", "metrics", "optimizer", "escape".
struct ExperimentConfig {
  std::string command;
  std::string preset;  // empty for explicit configs
  std::uint64_t seed = 0;
  std::string outdir = "runs";
  Index reps = 1;
  Json blocks = Json::object();
  std::vector<std::string> deviations;

  Json to_json() const;
  /// Accepts a config file object; exactly one of "preset" and "blocks" must be present.
  static ExperimentConfig from_json(const Json& j);
  /// Deterministic id from (command, preset, seed) and a digest of the resolved config.
  std::string run_id() const;
};

std::vector<std::string> preset_names();
/// Throws ValidationError listing the available names for an unknown preset.
ExperimentConfig preset(const std::string& name);

/// Typed lookup with default; throws ValidationError on a type mismatch.
template <class T>
T block_value(const Json& blocks, const std::string& block, const std::string& key, T fallback) {
  if (!blocks.contains(block) || !blocks.at(block).contains(key)) return fallback;
  try {
    return blocks.at(block).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(block + "." + key + " has the wrong type");
  }
}

/// FNV-1a 64-bit digest.
std::uint64_t fnv1a(const std::string& text);

}  // namespace noisegeom
