#include <benchmark/benchmark.h>

#include "svit/haog.hpp"
#include "svit/rng.hpp"
#include "svit/synth.hpp"
#include "svit/train.hpp"

using namespace svit;

namespace {

// Forward pass over a T-frame clip (toy config).
void BM_ForwardClip(benchmark::State& state) {
  ModelConfig cfg;
  cfg.depth = static_cast<std::uint32_t>(state.range(0));
  const Parameters params = init_parameters(cfg, 1);
  GenConfig gen;
  const VideoClipSample clip = gen_clip(gen, 2);
  const Frames frames = clip.frames.select(sample_frames(0, gen.raw_frames - 1, cfg.frames));
  for (auto _ : state) benchmark::DoNotOptimize(infer(cfg, params, frames).osc_logit);
}
BENCHMARK(BM_ForwardClip)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_ForwardImage(benchmark::State& state) {
  ModelConfig cfg;
  const Parameters params = init_parameters(cfg, 1);
  const SceneImage scene = gen_scene(GenConfig{}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(infer_haog(cfg, params, scene.pixels).exist_logits[0]);
}
BENCHMARK(BM_ForwardImage)->Unit(benchmark::kMicrosecond);

// One Adam step on a full toy batch; range(0) worker threads.
void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  OptimizerConfig opt;
  opt.images_per_batch = 4;
  opt.videos_per_batch = 2;
  GenConfig gen;
  TrainingData data;
  for (std::uint64_t i = 0; i < 4; ++i) data.images.push_back(gen_scene(gen, derive_seed(4, i)));
  for (std::uint64_t i = 0; i < 2; ++i) data.clips.push_back(gen_clip(gen, derive_seed(5, i)));
  const Batch batch = make_batch(data, cfg, opt, 0, 6);
  TrainState ts = make_train_state(init_parameters(cfg, 7), 8);
  const auto threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    if (ts.step + 1 >= opt.total_steps) ts.step = 0;
    benchmark::DoNotOptimize(train_step(ts, cfg, opt, batch, LossWeights{}, threads).l_total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_Giou(benchmark::State& state) {
  Rng rng(9);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 1024; ++i) {
    const double x = rng.uniform(0, 0.8), y = rng.uniform(0, 0.8);
    boxes.push_back({x, y, x + rng.uniform(0.01, 0.2), y + rng.uniform(0.01, 0.2)});
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(giou(boxes[i & 1023], boxes[(i * 7 + 3) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Giou);

}  // namespace
BENCHMARK_MAIN();
