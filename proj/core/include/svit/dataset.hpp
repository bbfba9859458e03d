#pragma once

// On-disk dataset layout:
//   images/annotations.jsonl   one HAOG record per scene, "image" relative to images/
//   images/scene_NNNNN.svt     single-frame tensor files
//   clips/clips.jsonl          {"clip", "frames", "fps", "pnr_index", "osc_label"} per line
//   clips/clip_NNNNN.svt       F-frame tensor files

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svit/synth.hpp"
#include "svit/train.hpp"

namespace svit {

struct ClipManifestEntry {
  std::string clip;  // file name relative to clips/
  std::size_t frames = 0;
  double fps = 0.0;
  std::size_t pnr_index = 0;
  bool osc_label = false;
};

std::uint64_t scene_seed(std::uint64_t base, std::size_t index);
std::uint64_t clip_seed(std::uint64_t base, std::size_t index);

/// Generates cfg.num_images scenes and cfg.num_clips clips under `dir`.
void write_dataset(const std::filesystem::path& dir, const GenConfig& cfg, std::uint64_t seed);

std::string clip_manifest_line(const ClipManifestEntry& e);
ClipManifestEntry parse_clip_manifest_line(const std::string& line);
std::vector<ClipManifestEntry> read_clip_manifest(const std::filesystem::path& manifest);

/// Loads one clip; throws IoError naming the path when the file is missing.
VideoClipSample load_clip(const std::filesystem::path& clips_dir, const ClipManifestEntry& e);

TrainingData load_training_data(const std::filesystem::path& dir);

}  // namespace svit
