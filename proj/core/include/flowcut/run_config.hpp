#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "flowcut/affinity.hpp"
#include "flowcut/crf.hpp"
#include "flowcut/selftrain.hpp"
#include "flowcut/spectral.hpp"

namespace flowcut {

/// Everything that determines a run's outputs. Serialised next to the outputs
/// as config.json together with its hash.
struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path output_root = "out";
  AffinityConfig affinity;
  CrfParams crf;
  bool use_crf = true;
  EigenSolverOptions eigen;
  std::size_t corner_block = 1;
  SelfTrainConfig selftrain;
  std::string run_name = "default";
  std::optional<std::filesystem::path> initial_masks;  // round-0 masks; graph cut when absent
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
};

std::string config_to_json(const RunConfig& cfg);
/// Fields missing from the JSON keep their defaults.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON, excluding settings that cannot change
/// outputs (thread count).
std::string config_hash(const RunConfig& cfg);

/// Writes <dir>/config.json containing the config and its hash.
void write_config_snapshot(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace flowcut
