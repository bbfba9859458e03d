#include "svit/eval.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "svit/dataset.hpp"
#include "svit/errors.hpp"

namespace svit {

std::size_t localize_pnr(const std::vector<double>& scores) {
  if (scores.empty()) throw ArgumentError("localize_pnr: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

double abs_temporal_error(std::size_t pred, std::size_t gt, double fps) {
  const double diff = pred > gt ? static_cast<double>(pred - gt) : static_cast<double>(gt - pred);
  return diff / fps;
}

ViewSpec make_view_spec(std::size_t n_temporal, std::size_t n_spatial, std::size_t raw_frames, std::size_t sampled) {
  if (n_temporal == 0 || n_spatial == 0) throw ArgumentError("at least one temporal and one spatial view required");
  if (n_spatial > 3) throw ArgumentError("at most 3 spatial views");
  if (sampled == 0 || raw_frames < sampled)
    throw ArgumentError("clip of " + std::to_string(raw_frames) + " frames cannot supply " + std::to_string(sampled));
  ViewSpec spec;
  const std::size_t stride = sampled > 1 ? (raw_frames - 1) / ((sampled - 1) * n_temporal) : 1;
  const std::size_t step = std::max<std::size_t>(1, stride);
  for (std::size_t k = 0; k < n_temporal; ++k) spec.temporal_offsets.push_back(std::min(k * step, raw_frames - sampled));
  switch (n_spatial) {
    case 1: spec.spatial_crops = {CropAnchor::kCenter}; break;
    case 2: spec.spatial_crops = {CropAnchor::kLeft, CropAnchor::kRight}; break;
    default: spec.spatial_crops = {CropAnchor::kLeft, CropAnchor::kCenter, CropAnchor::kRight}; break;
  }
  return spec;
}

std::size_t aggregate_views(const std::vector<ViewScores>& views) {
  bool found = false;
  double best_score = 0.0;
  std::size_t best_raw = 0;
  for (const auto& v : views) {
    if (v.raw_indices.size() != v.scores.size()) throw ArgumentError("aggregate_views: index/score length mismatch");
    for (std::size_t i = 0; i < v.scores.size(); ++i) {
      const double s = v.scores[i];
      const std::size_t r = v.raw_indices[i];
      if (!found || s > best_score || (s == best_score && r < best_raw)) {
        found = true;
        best_score = s;
        best_raw = r;
      }
    }
  }
  if (!found) throw ArgumentError("aggregate_views: no scores");
  return best_raw;
}

ClipScorer model_scorer(const ModelConfig& cfg, const Parameters& params) {
  return [cfg, &params](const VideoClipSample&, const Frames& frames, const std::vector<std::size_t>&) {
    const Inference inf = infer(cfg, params, frames);
    return ViewOutput{inf.frame_scores, inf.osc_logit};
  };
}

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

MultiviewResult multiview_infer(const VideoClipSample& clip, const ViewSpec& views, const ModelConfig& cfg,
                                ScaleRange scales, const ClipScorer& scorer) {
  if (views.view_count() == 0) throw ArgumentError("multiview_infer: empty view spec");
  const std::size_t f = clip.frames.count;
  const std::size_t t = cfg.frames;
  MultiviewResult out;
  double osc_sum = 0.0;
  for (std::size_t offset : views.temporal_offsets) {
    if (offset >= f || f - offset < t)
      throw ArgumentError("view offset " + std::to_string(offset) + " leaves fewer than " + std::to_string(t) +
                          " of " + std::to_string(f) + " frames");
    const std::vector<std::size_t> raw = sample_frames(offset, f - 1, t);
    const Frames selected = clip.frames.select(raw);
    for (CropAnchor anchor : views.spatial_crops) {
      const Frames view = resize_crop(selected, cfg.image_size, scales, 0, false, anchor);
      const ViewOutput o = scorer(clip, view, raw);
      if (o.frame_logits.size() != t) throw ArgumentError("scorer returned the wrong number of frame scores");
      ViewScores vs;
      vs.raw_indices = raw;
      for (double l : o.frame_logits) vs.scores.push_back(sigmoid(l));
      out.views.push_back(std::move(vs));
      osc_sum += sigmoid(o.osc_logit);
    }
  }
  out.pnr_raw_index = aggregate_views(out.views);
  out.osc_probability = osc_sum / static_cast<double>(out.views.size());
  return out;
}

MultiviewResult multiview_infer(const Parameters& params, const VideoClipSample& clip, const ViewSpec& views,
                                const ModelConfig& cfg, ScaleRange scales) {
  return multiview_infer(clip, views, cfg, scales, model_scorer(cfg, params));
}

void summarize(EvalReport& r) {
  r.sample_count = r.samples.size();
  r.localized_count = 0;
  double err = 0.0;
  std::size_t exact = 0, osc_ok = 0;
  for (const auto& s : r.samples) {
    if ((s.osc_probability >= 0.5) == s.osc_label) ++osc_ok;
    if (!s.osc_label) continue;
    ++r.localized_count;
    err += s.error_seconds;
    if (s.predicted_index == s.gt_index) ++exact;
  }
  r.mean_abs_error_seconds = r.localized_count ? err / static_cast<double>(r.localized_count) : 0.0;
  r.exact_frame_accuracy = r.localized_count ? static_cast<double>(exact) / static_cast<double>(r.localized_count) : 0.0;
  r.osc_accuracy = r.sample_count ? static_cast<double>(osc_ok) / static_cast<double>(r.sample_count) : 0.0;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mean_abs_error_seconds"] = mean_abs_error_seconds;
  j["exact_frame_accuracy"] = exact_frame_accuracy;
  j["osc_accuracy"] = osc_accuracy;
  j["sample_count"] = sample_count;
  j["localized_count"] = localized_count;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    nlohmann::ordered_json o;
    o["clip"] = s.clip;
    o["predicted_index"] = s.predicted_index;
    o["gt_index"] = s.gt_index;
    o["fps"] = s.fps;
    o["osc_label"] = s.osc_label ? 1 : 0;
    o["osc_probability"] = s.osc_probability;
    if (s.osc_label)
      o["error_seconds"] = s.error_seconds;
    else
      o["error_seconds"] = nullptr;
    arr.push_back(std::move(o));
  }
  j["samples"] = std::move(arr);
  return j.dump(2) + "\n";
}

EvalReport evaluate(const std::filesystem::path& manifest, ViewCounts counts, const ModelConfig& cfg,
                    ScaleRange scales, const ClipScorer& scorer, std::size_t threads) {
  const auto entries = read_clip_manifest(manifest);
  const auto dir = manifest.parent_path();
  EvalReport report;
  report.samples.resize(entries.size());
  detail::parallel_for(entries.size(), threads, [&](std::size_t i) {
    const auto& e = entries[i];
    const VideoClipSample clip = load_clip(dir, e);
    const ViewSpec spec = make_view_spec(counts.temporal, counts.spatial, clip.frames.count, cfg.frames);
    const MultiviewResult res = multiview_infer(clip, spec, cfg, scales, scorer);
    SampleRecord& s = report.samples[i];
    s.clip = e.clip;
    s.predicted_index = res.pnr_raw_index;
    s.gt_index = e.pnr_index;
    s.fps = e.fps;
    s.osc_label = e.osc_label;
    s.osc_probability = res.osc_probability;
    s.error_seconds = abs_temporal_error(res.pnr_raw_index, e.pnr_index, e.fps);
  });
  summarize(report);
  return report;
}

EvalReport evaluate(const Parameters& params, const std::filesystem::path& manifest, ViewCounts counts,
                    const ModelConfig& cfg, ScaleRange scales, std::size_t threads) {
  return evaluate(manifest, counts, cfg, scales, model_scorer(cfg, params), threads);
}

}  // namespace svit
