#pragma once

// Procedural stand-in for annotated still images and state-change clips.
//
// Scenes show two hand rectangles in fixed colours and up to two object
// rectangles on a low-amplitude noise background; all geometry lies on the
// pixel grid so rendered rectangles and annotated boxes agree exactly. In a
// state-change clip one hand moves up into its object and, on the first frame
// of contact, the object switches to its "changed" colour.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "svit/frames.hpp"
#include "svit/haog.hpp"

namespace svit {

struct GenConfig {
  std::uint32_t image_size = 32;
  std::uint32_t raw_frames = 64;
  double fps = 30.0;
  // Number of frames the evaluation sampler takes from a clip; state changes
  // are placed on that sampling grid.
  std::uint32_t grid_frames = 8;
  std::uint32_t speed_min = 1;  // pixels per frame
  std::uint32_t speed_max = 3;
  double contact_threshold = 0.1;  // intersection / object area
  double hand_prob = 0.9;
  double object_prob = 0.8;
  double no_change_prob = 0.25;
  std::uint32_t num_images = 16;
  std::uint32_t num_clips = 8;

  /// Throws ConfigError on an unusable configuration.
  void validate(std::uint32_t patch_size = 1) const;
};

struct SceneImage {
  Frames pixels;  // one frame
  Haog haog;
};

struct VideoClipSample {
  Frames frames;
  double fps = 30.0;
  std::size_t pnr_index = 0;
  bool osc_label = false;
  std::vector<Haog> frame_haogs;  // generator ground truth, may be empty
};

/// Fixed palette. Exposed so tests can re-measure rendered geometry.
struct Palette {
  static constexpr std::size_t kChannels = 3;
  static std::array<double, 3> hand(std::size_t side);
  static std::array<double, 3> object(std::size_t side, bool changed);
};

/// Intersection area over object area; 0 when the object has no area.
double overlap_fraction(const BoundingBox& hand, const BoundingBox& object);

SceneImage gen_scene(const GenConfig& cfg, std::uint64_t seed);
VideoClipSample gen_clip(const GenConfig& cfg, std::uint64_t seed);

/// T raw indices from first to last inclusive, interior points rounded
/// (halves up) onto the uniform grid.
std::vector<std::size_t> sample_frames(std::size_t first, std::size_t last, std::size_t count);

/// Random (first, last) window for training: first in [0, jitter], last in
/// [F - 1 - jitter, F - 1], jitter clipped so that first <= last.
std::pair<std::size_t, std::size_t> training_window(std::size_t raw_frames, std::size_t jitter, std::uint64_t seed);

/// Position in `sampled` closest to `raw`; ties go to the earlier position.
std::size_t nearest_sample(const std::vector<std::size_t>& sampled, std::size_t raw);

/// First position whose raw index is >= raw, i.e. the first sampled frame
/// that already shows a change happening at raw; nearest_sample when every
/// sample precedes raw.
std::size_t first_sample_at_or_after(const std::vector<std::size_t>& sampled, std::size_t raw);

enum class CropAnchor { kCenter, kLeft, kRight };

struct ScaleRange {
  std::uint32_t min = 32;
  std::uint32_t max = 32;
};

/// Shorter-side rescale followed by a square crop, bilinear resampling.
/// Train mode draws the scale from `scales` and a random crop position;
/// eval mode uses the midpoint scale and the given anchor (vertically
/// centred).
Frames resize_crop(const Frames& frames, std::size_t crop_size, ScaleRange scales, std::uint64_t seed,
                   bool train_mode, CropAnchor anchor = CropAnchor::kCenter);

/// Bilinear resize (half-pixel centres, edge clamped).
Frames resize_bilinear(const Frames& frames, std::size_t height, std::size_t width);

}  // namespace svit
