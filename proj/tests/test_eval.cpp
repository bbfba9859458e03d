#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "svit/dataset.hpp"
#include "svit/errors.hpp"
#include "svit/eval.hpp"

using namespace svit;

namespace {

ViewScores view(std::vector<std::size_t> raw, std::vector<double> scores) { return {std::move(raw), std::move(scores)}; }

// Logit +20 at the sampled frame nearest the true change, -20 elsewhere.
ClipScorer oracle_scorer() {
  return [](const VideoClipSample& clip, const Frames&, const std::vector<std::size_t>& raw) {
    ViewOutput o;
    o.frame_logits.assign(raw.size(), -20.0);
    if (clip.osc_label) o.frame_logits[nearest_sample(raw, clip.pnr_index)] = 20.0;
    o.osc_logit = clip.osc_label ? 20.0 : -20.0;
    return o;
  };
}

ClipScorer constant_scorer() {
  return [](const VideoClipSample&, const Frames&, const std::vector<std::size_t>& raw) {
    return ViewOutput{std::vector<double>(raw.size(), 0.3), 0.0};
  };
}

std::filesystem::path dataset(const std::string& name, double no_change = 0.25) {
  GenConfig gen;
  gen.num_images = 1;
  gen.num_clips = 8;
  gen.no_change_prob = no_change;
  const auto dir = svit::testing::scratch_dir(name);
  write_dataset(dir, gen, 21);
  return dir;
}

}  // namespace

TEST(Localize, Argmax) {
  EXPECT_EQ(localize_pnr({0.1, 0.9, 0.3}), 1u);
  EXPECT_EQ(localize_pnr({0.4, 0.4, 0.4}), 0u);
  EXPECT_THROW(localize_pnr({}), ArgumentError);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s(8);
    for (double& v : s) v = rng.uniform(-3, 3);
    std::vector<double> shifted = s, squashed = s;
    for (double& v : shifted) v += 7.5;
    for (double& v : squashed) v = std::tanh(v) * 3 + 1;
    EXPECT_EQ(localize_pnr(shifted), localize_pnr(s));
    EXPECT_EQ(localize_pnr(squashed), localize_pnr(s));
  }
}

TEST(TemporalError, Seconds) {
  EXPECT_EQ(abs_temporal_error(9, 9, 30), 0.0);
  EXPECT_DOUBLE_EQ(abs_temporal_error(30, 15, 30), 0.5);
  EXPECT_EQ(abs_temporal_error(3, 40, 24), abs_temporal_error(40, 3, 24));
}

TEST(ViewSpec, Offsets) {
  const ViewSpec one = make_view_spec(1, 1, 64, 8);
  EXPECT_EQ(one.temporal_offsets, (std::vector<std::size_t>{0}));
  EXPECT_EQ(one.spatial_crops, (std::vector<CropAnchor>{CropAnchor::kCenter}));
  const ViewSpec six = make_view_spec(3, 2, 64, 8);
  EXPECT_EQ(six.temporal_offsets, (std::vector<std::size_t>{0, 3, 6}));
  EXPECT_EQ(six.view_count(), 6u);
  EXPECT_EQ(make_view_spec(2, 3, 8, 8).temporal_offsets, (std::vector<std::size_t>{0, 0}));
  EXPECT_THROW(make_view_spec(1, 4, 64, 8), ArgumentError);
  EXPECT_THROW(make_view_spec(1, 1, 4, 8), ArgumentError);
}

TEST(Aggregation, SingleViewIsPlainArgmax) {
  const std::vector<std::size_t> raw{0, 9, 18, 27, 36, 45, 54, 63};
  const std::vector<double> s{0.1, 0.2, 0.8, 0.3, 0.8, 0.0, 0.5, 0.6};
  EXPECT_EQ(aggregate_views({view(raw, s)}), raw[localize_pnr(s)]);
}

TEST(Aggregation, DominatedViewIsNoOp) {
  const ViewScores a = view({0, 10, 20, 30}, {0.2, 0.9, 0.4, 0.1});
  const ViewScores b = view({5, 15, 25, 35}, {0.89, 0.5, 0.3, 0.88});
  EXPECT_EQ(aggregate_views({a}), 10u);
  EXPECT_EQ(aggregate_views({a, b}), 10u);
}

TEST(Aggregation, UniqueMaxInSecondView) {
  const ViewScores a = view({0, 10, 20, 30}, {0.2, 0.7, 0.4, 0.1});
  const ViewScores b = view({5, 15, 25, 35}, {0.3, 0.5, 0.95, 0.2});
  EXPECT_EQ(aggregate_views({a, b}), 25u);
}

TEST(Aggregation, OrderIndependent) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ViewScores> views;
    for (int v = 0; v < 4; ++v) {
      ViewScores s;
      for (int i = 0; i < 6; ++i) {
        s.raw_indices.push_back(static_cast<std::size_t>(rng.integer(0, 40)));
        // Coarse values so ties across views happen.
        s.scores.push_back(static_cast<double>(rng.integer(0, 5)) / 5.0);
      }
      views.push_back(s);
    }
    const std::size_t expect = aggregate_views(views);
    std::vector<ViewScores> shuffled = views;
    std::reverse(shuffled.begin(), shuffled.end());
    EXPECT_EQ(aggregate_views(shuffled), expect);
    std::rotate(shuffled.begin(), shuffled.begin() + 1, shuffled.end());
    EXPECT_EQ(aggregate_views(shuffled), expect);
    // Associative: aggregating a merged pair equals aggregating all at once.
    ViewScores merged = views[0];
    merged.raw_indices.insert(merged.raw_indices.end(), views[1].raw_indices.begin(), views[1].raw_indices.end());
    merged.scores.insert(merged.scores.end(), views[1].scores.begin(), views[1].scores.end());
    EXPECT_EQ(aggregate_views({merged, views[2], views[3]}), expect);
  }
  EXPECT_THROW(aggregate_views({}), ArgumentError);
}

TEST(Multiview, SingleViewMatchesPlainInference) {
  ModelConfig cfg;
  cfg.depth = 1;
  const Parameters params = init_parameters(cfg, 2);
  GenConfig gen;
  const VideoClipSample clip = gen_clip(gen, 4);
  const MultiviewResult r = multiview_infer(params, clip, make_view_spec(1, 1, 64, 8), cfg);
  const auto raw = sample_frames(0, 63, 8);
  const Inference inf = infer(cfg, params, clip.frames.select(raw));
  EXPECT_EQ(r.pnr_raw_index, raw[localize_pnr(inf.frame_scores)]);
  EXPECT_NEAR(r.osc_probability, 1.0 / (1.0 + std::exp(-inf.osc_logit)), 1e-15);
  EXPECT_THROW(multiview_infer(params, clip, ViewSpec{{60}, {CropAnchor::kCenter}}, cfg), ArgumentError);
}

TEST(Evaluate, OracleScorer) {
  const auto dir = dataset("eval_oracle");
  ModelConfig cfg;
  const EvalReport r = evaluate(dir / "clips" / "clips.jsonl", {2, 3}, cfg, {32, 32}, oracle_scorer());
  EXPECT_EQ(r.sample_count, 8u);
  EXPECT_GT(r.localized_count, 0u);
  EXPECT_EQ(r.mean_abs_error_seconds, 0.0);
  EXPECT_EQ(r.exact_frame_accuracy, 1.0);
  EXPECT_EQ(r.osc_accuracy, 1.0);
}

TEST(Evaluate, ConstantScorerClosedForm) {
  const auto dir = dataset("eval_const");
  const auto manifest = dir / "clips" / "clips.jsonl";
  const EvalReport r = evaluate(manifest, {1, 1}, ModelConfig{}, {32, 32}, constant_scorer());
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : read_clip_manifest(manifest))
    if (e.osc_label) {
      sum += static_cast<double>(e.pnr_index) / e.fps;
      ++n;
    }
  for (const auto& s : r.samples) EXPECT_EQ(s.predicted_index, 0u);
  EXPECT_NEAR(r.mean_abs_error_seconds, sum / static_cast<double>(n), 1e-12);
}

TEST(Evaluate, ReportRecomputableAndThreadIndependent) {
  const auto dir = dataset("eval_model");
  ModelConfig cfg;
  cfg.depth = 1;
  const Parameters params = init_parameters(cfg, 5);
  const auto manifest = dir / "clips" / "clips.jsonl";
  const EvalReport r = evaluate(params, manifest, {2, 1}, cfg, {32, 32}, 1);
  EXPECT_EQ(r.to_json(), evaluate(params, manifest, {2, 1}, cfg, {32, 32}, 3).to_json());

  const auto j = nlohmann::json::parse(r.to_json());
  double err = 0.0, n = 0.0;
  for (const auto& s : j["samples"])
    if (s["osc_label"] == 1) {
      err += s["error_seconds"].get<double>();
      n += 1;
    } else {
      EXPECT_TRUE(s["error_seconds"].is_null());
    }
  EXPECT_NEAR(j["mean_abs_error_seconds"].get<double>(), err / n, 1e-12);
  EXPECT_EQ(j["sample_count"], 8);
}

TEST(Evaluate, MissingClipNamesPath) {
  const auto dir = dataset("eval_missing");
  std::filesystem::remove(dir / "clips" / "clip_00003.svt");
  try {
    evaluate(dir / "clips" / "clips.jsonl", {1, 1}, ModelConfig{}, {32, 32}, constant_scorer());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("clip_00003.svt"), std::string::npos);
  }
}
