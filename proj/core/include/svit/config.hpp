#pragma once

// Plain-text run configuration: one `key = value` per line, '#' starts a
// comment. Unknown keys, repeated keys and malformed values are errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "svit/losses.hpp"
#include "svit/model.hpp"
#include "svit/synth.hpp"
#include "svit/train.hpp"

namespace svit {

struct RunConfig {
  ModelConfig model;
  GenConfig gen;
  OptimizerConfig optimizer;
  LossWeights loss;
  std::string data_dir;  // dataset root for train/eval; relative to the config file
  // Epoch checkpoints kept by train; older ones are deleted. 0 keeps all.
  std::uint32_t keep_checkpoints = 3;
  std::uint32_t views_temporal = 1;
  std::uint32_t views_spatial = 1;
  std::uint32_t gradcheck_samples = 200;
  double gradcheck_epsilon = 1e-5;
  std::uint32_t gradcheck_images = 4;
  std::uint32_t gradcheck_clips = 2;

  /// Cross-section checks (shared image size, crop scales, sampling grid).
  void validate() const;
};

RunConfig parse_config(std::string_view text);
/// Also resolves a relative data_dir against the file's directory.
RunConfig load_config(const std::filesystem::path& path);

/// Every accepted key, in file order of the canonical dump.
std::vector<std::string> config_keys();
/// Canonical text form; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& c);

}  // namespace svit
