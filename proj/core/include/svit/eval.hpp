#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "svit/model.hpp"
#include "svit/synth.hpp"

namespace svit {

/// Argmax over frame scores, ties to the smallest position.
std::size_t localize_pnr(const std::vector<double>& scores);

/// |pred - gt| / fps in seconds.
double abs_temporal_error(std::size_t pred_raw_index, std::size_t gt_raw_index, double fps);

struct ViewSpec {
  std::vector<std::size_t> temporal_offsets;  // first raw frame per temporal view
  std::vector<CropAnchor> spatial_crops;

  std::size_t view_count() const { return temporal_offsets.size() * spatial_crops.size(); }
};

/// Offsets k * max(1, (F-1) / ((T-1) * n_temporal)) for k < n_temporal,
/// clamped to F - T, so the views interleave inside one sampling stride.
/// Anchors: 1 -> centre; 2 -> left, right; 3 -> left, centre, right.
ViewSpec make_view_spec(std::size_t n_temporal, std::size_t n_spatial, std::size_t raw_frames, std::size_t sampled);

/// Frame scores of one view keyed by raw frame index.
struct ViewScores {
  std::vector<std::size_t> raw_indices;
  std::vector<double> scores;
};

/// Raw index of the largest score over all views; equal maxima resolve to
/// the smallest raw index, which keeps the result independent of view order.
std::size_t aggregate_views(const std::vector<ViewScores>& views);

struct ViewOutput {
  std::vector<double> frame_logits;
  double osc_logit = 0.0;
};

/// Scores one prepared view. `clip` is the source clip, `frames` the sampled
/// and cropped view, `raw_indices` where each sampled frame came from.
using ClipScorer =
    std::function<ViewOutput(const VideoClipSample& clip, const Frames& frames, const std::vector<std::size_t>& raw)>;

ClipScorer model_scorer(const ModelConfig& cfg, const Parameters& params);

struct MultiviewResult {
  std::size_t pnr_raw_index = 0;
  double osc_probability = 0.0;
  std::vector<ViewScores> views;  // sigmoid scores, temporal-major
};

MultiviewResult multiview_infer(const VideoClipSample& clip, const ViewSpec& views, const ModelConfig& cfg,
                                ScaleRange scales, const ClipScorer& scorer);
MultiviewResult multiview_infer(const Parameters& params, const VideoClipSample& clip, const ViewSpec& views,
                                const ModelConfig& cfg, ScaleRange scales = {});

struct SampleRecord {
  std::string clip;
  std::size_t predicted_index = 0;
  std::size_t gt_index = 0;
  double fps = 0.0;
  bool osc_label = false;
  double osc_probability = 0.0;
  double error_seconds = 0.0;  // meaningful only when osc_label
};

struct EvalReport {
  double mean_abs_error_seconds = 0.0;  // over clips with a state change
  double exact_frame_accuracy = 0.0;    // same subset
  double osc_accuracy = 0.0;            // all clips, threshold 0.5
  std::size_t sample_count = 0;
  std::size_t localized_count = 0;
  std::vector<SampleRecord> samples;

  std::string to_json() const;
};

/// Fills the aggregate fields from `samples`.
void summarize(EvalReport& report);

struct ViewCounts {
  std::size_t temporal = 1;
  std::size_t spatial = 1;
};

/// Runs multiview inference over every clip listed in the manifest (a
/// clips.jsonl file; clip paths are relative to its directory).
EvalReport evaluate(const std::filesystem::path& manifest, ViewCounts counts, const ModelConfig& cfg,
                    ScaleRange scales, const ClipScorer& scorer, std::size_t threads = 1);
EvalReport evaluate(const Parameters& params, const std::filesystem::path& manifest, ViewCounts counts,
                    const ModelConfig& cfg, ScaleRange scales = {}, std::size_t threads = 1);

}  // namespace svit
