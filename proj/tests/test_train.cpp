#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "svit/errors.hpp"
#include "svit/synth.hpp"
#include "svit/train.hpp"

using namespace svit;

namespace {

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.depth = 1;
  return cfg;
}

TrainingData synthetic(std::size_t images, std::size_t clips, std::uint64_t seed) {
  GenConfig gen;
  gen.no_change_prob = 0.0;
  TrainingData d;
  for (std::size_t i = 0; i < images; ++i) d.images.push_back(gen_scene(gen, derive_seed(seed, i)));
  for (std::size_t i = 0; i < clips; ++i) d.clips.push_back(gen_clip(gen, derive_seed(seed + 1, i)));
  return d;
}

Batch fixed_batch(const ModelConfig& cfg, std::size_t images, std::size_t clips, std::uint64_t seed) {
  OptimizerConfig opt;
  opt.images_per_batch = static_cast<std::uint32_t>(images);
  opt.videos_per_batch = static_cast<std::uint32_t>(clips);
  return make_batch(synthetic(images, clips, seed), cfg, opt, 0, seed);
}

// sum_k c_k x_k^2 with c_k in [0.5, 1.5], exact gradient 2 c_k x_k. Each
// summand is reported separately, so differences do not cancel a large total.
LossEvaluator quadratic(const Parameters& shape, double grad_scale = 1.0) {
  return [shape, grad_scale](const Parameters& p, Parameters* g) {
    LossProbe probe;
    std::size_t k = 0;
    zip_params(
        [&](const std::string&, const Matrix& x, const Matrix&) {
          for (double v : x.data) {
            const double c = 0.5 + static_cast<double>(k++ % 11) / 10.0;
            probe.terms.push_back({c, v * v});
            probe.value += c * v * v;
          }
        },
        p, shape);
    if (g) {
      k = 0;
      zip_params(
          [&](const std::string&, const Matrix& x, Matrix& gm) {
            for (std::size_t i = 0; i < x.data.size(); ++i)
              gm.data[i] += grad_scale * 2.0 * (0.5 + static_cast<double>(k++ % 11) / 10.0) * x.data[i];
          },
          p, *g);
    }
    return probe;
  };
}

}  // namespace

TEST(CosineLr, Schedule) {
  EXPECT_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_EQ(cosine_lr(100, 100, 1e-3), 0.0);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3), 5e-4, 1e-18);
  EXPECT_GT(cosine_lr(10, 100, 1e-3), cosine_lr(11, 100, 1e-3));
  EXPECT_THROW(cosine_lr(0, 0, 1e-3), ArgumentError);
  EXPECT_THROW(cosine_lr(101, 100, 1e-3), ArgumentError);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  const ModelConfig cfg = small_model();
  TrainState s = make_train_state(init_parameters(cfg, 1), 0);
  s.first_moment.patch_bias.data.assign(s.first_moment.patch_bias.size(), 0.5);
  const Parameters before = s.params;
  OptimizerConfig opt;
  adam_update(s, zero_parameters(cfg), opt);
  EXPECT_EQ(s.params.patch_weight, before.patch_weight);
  EXPECT_EQ(s.step, 1u);
  EXPECT_NEAR(s.first_moment.patch_bias(0, 0), 0.45, 1e-15);
}

TEST(Adam, ConstantGradientStepApproachesLr) {
  const ModelConfig cfg = small_model();
  TrainState s = make_train_state(zero_parameters(cfg), 0);
  OptimizerConfig opt;
  opt.total_steps = 1000;
  Parameters g = zero_parameters(cfg);
  g.osc_bias(0, 0) = 0.3;
  g.pnr_bias(0, 0) = -2.0;
  for (int i = 0; i < 200; ++i) {
    const double lr = cosine_lr(s.step, opt.total_steps, opt.base_lr);
    const double before = s.params.osc_bias(0, 0);
    const double before2 = s.params.pnr_bias(0, 0);
    adam_update(s, g, opt);
    EXPECT_NEAR(before - s.params.osc_bias(0, 0), lr, lr * 1e-6);
    EXPECT_NEAR(s.params.pnr_bias(0, 0) - before2, lr, lr * 1e-6);
  }
}

TEST(Adam, RejectsNonFinite) {
  const ModelConfig cfg = small_model();
  TrainState s = make_train_state(init_parameters(cfg, 1), 0);
  Parameters g = zero_parameters(cfg);
  g.blocks[0].fc1_bias(0, 3) = std::nan("");
  try {
    adam_update(s, g, OptimizerConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("blocks.0.fc1.bias"), std::string::npos);
  }
}

TEST(Gradcheck, QuadraticIsExact) {
  const Parameters p = init_parameters(small_model(), 2);
  const GradcheckReport r = gradcheck(p, quadratic(p), 1e-5, 300, 1);
  EXPECT_EQ(r.checked, 300u);
  EXPECT_LT(r.max_relative_error, 1e-9);
}

TEST(Gradcheck, DetectsScaledGradient) {
  const Parameters p = init_parameters(small_model(), 2);
  const GradcheckReport r = gradcheck(p, quadratic(p, 2.0), 1e-5, 100, 1);
  EXPECT_NEAR(r.max_relative_error, 1.0 / 3.0, 1e-6);
}

TEST(Gradcheck, FullLossSmallModel) {
  const ModelConfig cfg = small_model();
  const Batch batch = fixed_batch(cfg, 2, 1, 3);
  const GradcheckReport r = gradcheck(init_parameters(cfg, 4), batch_loss(cfg, batch, LossWeights{}), 1e-5, 60, 5);
  EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_parameter << "[" << r.worst_index << "]";
}

TEST(TrainStep, ThreadCountDoesNotChangeGradients) {
  const ModelConfig cfg = small_model();
  const Parameters params = init_parameters(cfg, 5);
  const Batch batch = fixed_batch(cfg, 3, 2, 6);
  Parameters g1 = zero_parameters(cfg), g3 = zero_parameters(cfg);
  const auto a = evaluate_batch(cfg, params, batch, LossWeights{}, &g1, 1);
  const auto b = evaluate_batch(cfg, params, batch, LossWeights{}, &g3, 3);
  EXPECT_EQ(a.breakdown.l_total, b.breakdown.l_total);
  zip_params([](const std::string& n, const Matrix& x, const Matrix& y) { EXPECT_EQ(x, y) << n; }, g1, g3);
}

TEST(TrainStep, RequiresBothKinds) {
  const ModelConfig cfg = small_model();
  TrainState s = make_train_state(init_parameters(cfg, 1), 0);
  Batch b = fixed_batch(cfg, 1, 1, 2);
  b.clips.clear();
  EXPECT_THROW(train_step(s, cfg, OptimizerConfig{}, b, LossWeights{}), ArgumentError);
}

TEST(TrainStep, OverfitsFixedBatch) {
  const ModelConfig cfg;  // toy config
  const Batch batch = fixed_batch(cfg, 8, 4, 7);
  OptimizerConfig opt;  // default 300-step schedule; only the first 50 steps run
  TrainState s = make_train_state(init_parameters(cfg, 8), 9);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    const LossBreakdown b = train_step(s, cfg, opt, batch, LossWeights{});
    if (i == 0) first = b.l_total;
    last = b.l_total;
    EXPECT_NEAR(b.l_total, loss_total(b.l_con, b.l_haog, b.l_vid, LossWeights{}), 1e-12);
  }
  EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
}

TEST(Train, Deterministic) {
  const ModelConfig cfg = small_model();
  const TrainingData data = synthetic(4, 2, 10);
  OptimizerConfig opt;
  opt.total_steps = 3;
  opt.images_per_batch = 2;
  opt.videos_per_batch = 1;
  auto run = [&](std::size_t threads) {
    TrainState s = make_train_state(init_parameters(cfg, 11), 12);
    std::vector<double> losses;
    train(s, data, cfg, opt, LossWeights{}, [&](const StepRecord& r, const TrainState&) {
      losses.push_back(r.breakdown.l_total);
    }, threads);
    return std::make_pair(s, losses);
  };
  const auto [a, la] = run(1);
  const auto [b, lb] = run(2);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(a.step, 3u);
  zip_params([](const std::string& n, const Matrix& x, const Matrix& y) { EXPECT_EQ(x, y) << n; }, a.params,
             b.params);
}

TEST(Batches, PrepareClips) {
  const ModelConfig cfg;
  const TrainingData data = synthetic(2, 2, 13);
  OptimizerConfig opt;
  opt.scales = {32, 40};
  const ClipExample a = prepare_training_clip(data.clips[0], cfg, opt, 14);
  EXPECT_EQ(a.frames.count, cfg.frames);
  EXPECT_EQ(a.frames.height, cfg.image_size);
  EXPECT_EQ(a.raw_indices.size(), cfg.frames);
  EXPECT_GE(a.raw_indices[a.pnr_target], data.clips[0].pnr_index);
  EXPECT_EQ(a.frames, prepare_training_clip(data.clips[0], cfg, opt, 14).frames);

  const ClipExample e = prepare_eval_clip(data.clips[1], cfg, opt);
  EXPECT_EQ(e.raw_indices, sample_frames(0, 63, cfg.frames));
  EXPECT_EQ(e.raw_indices[e.pnr_target], data.clips[1].pnr_index);

  const Batch b1 = make_batch(data, cfg, opt, 3, 15);
  const Batch b2 = make_batch(data, cfg, opt, 3, 15);
  ASSERT_EQ(b1.clips.size(), 2u);
  EXPECT_EQ(b1.clips[1].frames, b2.clips[1].frames);
}
