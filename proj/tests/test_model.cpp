#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "svit/checkpoint.hpp"
#include "svit/errors.hpp"
#include "svit/losses.hpp"
#include "svit/model.hpp"
#include "svit/synth.hpp"

using namespace svit;

namespace {

ModelConfig toy() { return ModelConfig{}; }

Frames random_frames(std::size_t count, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Frames f(count, size, size);
  for (double& v : f.pixels) v = rng.uniform();
  return f;
}

}  // namespace

TEST(ModelConfig, SequenceLength) {
  ModelConfig c;
  c.frames = 16;
  c.image_size = 224;
  c.patch_size = 16;
  EXPECT_EQ(c.sequence_length(16), 3200u);
  EXPECT_EQ(toy().sequence_length(1), 16u + 4u);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.image_size = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.object_tokens = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(toy().validate());
}

TEST(Model, ShapesAndInit) {
  const ModelConfig cfg = toy();
  const Parameters p = init_parameters(cfg, 1);
  EXPECT_NO_THROW(check_parameter_shapes(cfg, p));
  EXPECT_EQ(p.consistency_weight(0, 0), 1.0);
  EXPECT_EQ(p.consistency_weight(0, 1), 0.0);
  EXPECT_EQ(p.blocks[0].norm1_gain(0, 5), 1.0);
  EXPECT_EQ(p.contact_weight.rows, 2u * cfg.dim);

  const Inference clip = infer(cfg, p, random_frames(8, 32, 2));
  EXPECT_EQ(clip.patch_tokens.rows, 8u * 16u);
  EXPECT_EQ(clip.object_tokens.rows, 8u * 4u);
  EXPECT_EQ(clip.object_tokens.cols, cfg.dim);
  EXPECT_EQ(clip.frame_scores.size(), 8u);

  ModelConfig deeper = cfg;
  deeper.depth = 3;
  EXPECT_THROW(check_parameter_shapes(deeper, p), ArgumentError);
}

TEST(Model, RejectsBadInput) {
  const ModelConfig cfg = toy();
  const Parameters p = init_parameters(cfg, 1);
  EXPECT_THROW(infer(cfg, p, random_frames(9, 32, 1)), ArgumentError);
  EXPECT_THROW(infer(cfg, p, random_frames(1, 16, 1)), ArgumentError);
  Frames bad = random_frames(1, 32, 1);
  bad.pixels[7] = std::nan("");
  EXPECT_THROW(infer(cfg, p, bad), NumericError);
  ModelConfig six = cfg;
  six.object_tokens = 6;
  EXPECT_THROW(infer_haog(six, init_parameters(six, 1), random_frames(1, 32, 1)), ConfigError);
}

TEST(Model, PatchifyEmbeddings) {
  const ModelConfig cfg = toy();
  Parameters params = init_parameters(cfg, 4);
  ad::Tape tape;
  const BoundParams p = bind_parameters(tape, params, nullptr);

  // Identical frames differ only by their temporal embedding.
  const Frames one = random_frames(1, 32, 5);
  const Frames stack = one.select(std::vector<std::size_t>{0, 0, 0});
  const Matrix tok = patchify(cfg, p, stack).value();
  const std::size_t hw = cfg.patches_per_frame();
  for (std::size_t t = 1; t < 3; ++t)
    for (std::size_t s = 0; s < hw; ++s)
      for (std::size_t c = 0; c < cfg.dim; ++c) {
        const double expect = params.pos_temporal(t, c) - params.pos_temporal(0, c);
        EXPECT_NEAR(tok(t * hw + s, c) - tok(s, c), expect, 1e-12);
      }

  // A zero kernel leaves the positional embeddings alone.
  Parameters z = params;
  std::fill(z.patch_weight.data.begin(), z.patch_weight.data.end(), 0.0);
  std::fill(z.patch_bias.data.begin(), z.patch_bias.data.end(), 0.0);
  ad::Tape tape2;
  const Matrix pos = patchify(cfg, bind_parameters(tape2, z, nullptr), one).value();
  for (std::size_t s = 0; s < hw; ++s)
    for (std::size_t c = 0; c < cfg.dim; ++c)
      EXPECT_EQ(pos(s, c), z.pos_spatial(s, c) + z.pos_temporal(0, c));
}

TEST(Model, ObjectTokenInit) {
  const ModelConfig cfg = toy();
  const Parameters params = init_parameters(cfg, 6);
  ad::Tape tape;
  const Matrix o = init_object_tokens(cfg, bind_parameters(tape, params, nullptr), 8).value();
  ASSERT_EQ(o.rows, 32u);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < cfg.dim; ++c)
        EXPECT_EQ(o(t * 4 + i, c), params.object_prompts(i, c) + params.pos_temporal(t, c));
}

TEST(Model, ImageEqualsOneFrameClip) {
  const ModelConfig cfg = toy();
  const Parameters params = init_parameters(cfg, 8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Frames clip = random_frames(4, 32, 100 + seed);
    const Frames image = clip.frame(2);
    const Frames one = clip.select(std::vector<std::size_t>{2});
    const Inference a = infer(cfg, params, image);
    const Inference b = infer(cfg, params, one);
    EXPECT_EQ(a.object_tokens, b.object_tokens);
    EXPECT_EQ(a.patch_tokens, b.patch_tokens);

    ad::Tape tape;
    const BoundParams p = bind_parameters(tape, params, nullptr);
    const ad::Var fa = forward(cfg, p, image).object_tokens;
    const ad::Var fb = forward(cfg, p, one).object_tokens;
    EXPECT_LT(loss_consistency(p, fb, fa).item(), 1e-12);
  }
}

TEST(Model, AttentionRowsSumToOne) {
  const ModelConfig cfg = toy();
  const Parameters params = init_parameters(cfg, 9);
  std::size_t maps = 0;
  double worst = 0.0;
  AttentionHook hook = [&](std::size_t, std::size_t, const Matrix& probs) {
    ++maps;
    EXPECT_EQ(probs.rows, cfg.sequence_length(8));
    for (std::size_t r = 0; r < probs.rows; ++r) {
      double s = 0;
      for (double v : probs.row_span(r)) s += v;
      worst = std::max(worst, std::fabs(s - 1.0));
    }
  };
  infer(cfg, params, random_frames(8, 32, 3), &hook);
  EXPECT_EQ(maps, cfg.depth * cfg.heads);
  EXPECT_LT(worst, 1e-6);
}

TEST(Model, Deterministic) {
  const ModelConfig cfg = toy();
  const Parameters params = init_parameters(cfg, 10);
  const Frames f = random_frames(8, 32, 11);
  const Inference a = infer(cfg, params, f);
  const Inference b = infer(cfg, params, f);
  EXPECT_EQ(a.patch_tokens, b.patch_tokens);
  EXPECT_EQ(a.frame_scores, b.frame_scores);
  EXPECT_EQ(init_parameters(cfg, 3).patch_weight, init_parameters(cfg, 3).patch_weight);
}

TEST(Heads, ZeroCases) {
  const ModelConfig cfg = toy();
  const Parameters params = zero_parameters(cfg);
  ad::Tape tape;
  const BoundParams p = bind_parameters(tape, params, nullptr);
  const HaogPrediction pred =
      HaogPrediction::from(predict_haog(cfg, p, tape.constant(Matrix(4, cfg.dim))));
  for (std::size_t j = 0; j < 4; ++j) {
    for (double v : pred.box_params[j]) EXPECT_EQ(v, 0.5);
    EXPECT_EQ(pred.exist_logits[j], 0.0);
    EXPECT_EQ(pred.box(j), (BoundingBox{0.25, 0.25, 0.75, 0.75}));
  }

  Parameters biased = params;
  biased.pnr_bias(0, 0) = 0.7;
  biased.osc_bias(0, 0) = -0.3;
  const Inference inf = infer(cfg, biased, random_frames(8, 32, 1));
  for (double s : inf.frame_scores) EXPECT_EQ(s, 0.7);
  EXPECT_EQ(inf.osc_logit, -0.3);
}

TEST(Heads, PoolingAndOscAffine) {
  ad::Tape tape;
  Matrix m(2, 3);
  m.data = {1, 2, 3, 5, 8, 13};
  const Matrix pooled = pool_cls(tape.constant(m)).value();
  EXPECT_EQ(pooled.data, (std::vector<double>{3, 5, 8}));

  const ModelConfig cfg = toy();
  const Parameters params = init_parameters(cfg, 12);
  const BoundParams p = bind_parameters(tape, params, nullptr);
  const Matrix a = svit::testing::random_matrix(1, cfg.dim, 1);
  const Matrix b = svit::testing::random_matrix(1, cfg.dim, 2);
  Matrix ab = a;
  for (std::size_t k = 0; k < ab.size(); ++k) ab.data[k] += b.data[k];
  const double la = predict_osc(p, tape.constant(a)).item();
  const double lb = predict_osc(p, tape.constant(b)).item();
  const double lab = predict_osc(p, tape.constant(ab)).item();
  EXPECT_NEAR(lab, la + lb - params.osc_bias(0, 0), 1e-12);
}

TEST(Checkpoint, RoundTrip) {
  ModelConfig cfg = toy();
  cfg.depth = 1;
  const Parameters params = init_parameters(cfg, 13);
  const std::string bytes = encode_checkpoint(cfg, params);
  EXPECT_EQ(bytes.substr(0, 4), "SVCK");
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config, cfg);
  zip_params([](const std::string& name, const Matrix& a, const Matrix& b) { EXPECT_EQ(a, b) << name; }, params,
             back.params);
  EXPECT_EQ(encode_checkpoint(back.config, back.params), bytes);

  const auto path = svit::testing::scratch_dir("ckpt") / "m.svck";
  save_checkpoint(path, cfg, params);
  EXPECT_EQ(load_checkpoint(path).config, cfg);
}

TEST(Checkpoint, RejectsDamage) {
  const ModelConfig cfg = toy();
  const std::string bytes = encode_checkpoint(cfg, init_parameters(cfg, 1));
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.svck"), IoError);
}
