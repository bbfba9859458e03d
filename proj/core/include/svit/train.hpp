#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svit/frames.hpp"
#include "svit/haog.hpp"
#include "svit/losses.hpp"
#include "svit/model.hpp"
#include "svit/synth.hpp"

namespace svit {

struct OptimizerConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint32_t total_steps = 300;
  std::uint32_t images_per_batch = 16;
  std::uint32_t videos_per_batch = 8;
  // Training clips draw first/last frame up to this many raw frames in from
  // either end.
  std::uint32_t sample_jitter = 4;
  ScaleRange scales{32, 32};

  void validate() const;
};

struct TrainState {
  Parameters params;
  Parameters first_moment;
  Parameters second_moment;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

TrainState make_train_state(Parameters params, std::uint64_t seed);

/// Half-period cosine decay: base * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr);

/// One bias-corrected Adam step at cosine_lr(state.step); increments the
/// step counter. Throws NumericError naming the first non-finite gradient.
void adam_update(TrainState& state, const Parameters& grads, const OptimizerConfig& cfg);

/// Clip as seen by the model: T sampled (and cropped) frames with the target
/// position among them.
struct ClipExample {
  Frames frames;
  std::vector<std::size_t> raw_indices;
  std::size_t pnr_target = 0;  // position in [0, T)
  bool osc_label = false;
};

/// Random window, uniform sampling inside it, scale jitter and random crop.
ClipExample prepare_training_clip(const VideoClipSample& clip, const ModelConfig& model, const OptimizerConfig& opt,
                                  std::uint64_t seed);
/// Full-clip window, midpoint scale, centre crop.
ClipExample prepare_eval_clip(const VideoClipSample& clip, const ModelConfig& model, const OptimizerConfig& opt);

struct Batch {
  std::vector<SceneImage> images;
  std::vector<ClipExample> clips;
};

/// One weighted summand of l_total.
struct WeightedTerm {
  double weight = 0.0;
  double value = 0.0;
};

struct BatchEvaluation {
  LossBreakdown breakdown;
  std::uint64_t branch_signature = 0;
  // Per-sample summands; their weighted sum is l_total up to rounding.
  std::vector<WeightedTerm> terms;
};

/// Loss of a mixed batch: HAOG loss on the images, video loss on the clips,
/// frame/clip consistency from running each clip again frame by frame. Batch
/// means of each term are combined with the weights. When `grads` is non-null
/// the gradient of l_total is added into it. Work is split across `threads`
/// workers; per-sample gradients are reduced in a fixed order so the result
/// does not depend on the thread count.
BatchEvaluation evaluate_batch(const ModelConfig& cfg, const Parameters& params, const Batch& batch,
                               const LossWeights& weights, Parameters* grads, std::size_t threads = 1);

/// evaluate_batch + adam_update. Both lists in the batch must be non-empty.
LossBreakdown train_step(TrainState& state, const ModelConfig& cfg, const OptimizerConfig& opt, const Batch& batch,
                         const LossWeights& weights, std::size_t threads = 1);

struct TrainingData {
  std::vector<SceneImage> images;
  std::vector<VideoClipSample> clips;
};

/// Deterministic batch for a given step: a per-epoch shuffle of each list,
/// consumed in order.
Batch make_batch(const TrainingData& data, const ModelConfig& model, const OptimizerConfig& opt, std::uint64_t step,
                 std::uint64_t seed);

struct StepRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  LossBreakdown breakdown;
};

using StepCallback = std::function<void(const StepRecord&, const TrainState&)>;

/// Runs optimizer steps until state.step reaches opt.total_steps.
void train(TrainState& state, const TrainingData& data, const ModelConfig& model, const OptimizerConfig& opt,
           const LossWeights& weights, const StepCallback& on_step = {}, std::size_t threads = 1);

// Finite-difference verification.

struct LossProbe {
  double value = 0.0;
  std::uint64_t signature = 0;  // branch signature of non-smooth primitives
  // Optional decomposition of value. When both sides of a difference carry
  // matching decompositions, the difference is taken per term, which avoids
  // cancelling two large totals.
  std::vector<WeightedTerm> terms;
};

/// Evaluates the loss at `params`; adds the analytic gradient into `grads`
/// when it is non-null.
using LossEvaluator = std::function<LossProbe(const Parameters& params, Parameters* grads)>;

/// l_total of a fixed batch, with its branch signature.
LossEvaluator batch_loss(const ModelConfig& cfg, const Batch& batch, const LossWeights& weights,
                         std::size_t threads = 1);

/// |a - n| / max(1e-8, |a| + |n|).
double relative_error(double analytic, double numeric);

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t resampled = 0;  // draws rejected because +-eps crossed a kink
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the analytic gradient with central differences on `samples`
/// coordinates: one per tensor first, the rest uniform over all scalars. A
/// coordinate whose two perturbed evaluations land on different smooth
/// pieces is redrawn.
GradcheckReport gradcheck(const Parameters& params, const LossEvaluator& loss, double epsilon, std::size_t samples,
                          std::uint64_t seed);

}  // namespace svit
