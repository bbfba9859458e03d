#include "svit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "parallel.hpp"
#include "svit/errors.hpp"
#include "svit/rng.hpp"

namespace svit {

void OptimizerConfig::validate() const {
  if (!(base_lr > 0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (images_per_batch == 0 || videos_per_batch == 0) throw ConfigError("batch sizes must be positive");
  if (scales.min == 0 || scales.min > scales.max) throw ConfigError("need 0 < scale_min <= scale_max");
}

TrainState make_train_state(Parameters params, std::uint64_t seed) {
  TrainState s;
  s.first_moment = params;
  s.second_moment = params;
  zip_params(
      [](const std::string&, Matrix& m, Matrix& v) {
        std::fill(m.data.begin(), m.data.end(), 0.0);
        std::fill(v.data.begin(), v.data.end(), 0.0);
      },
      s.first_moment, s.second_moment);
  s.params = std::move(params);
  s.seed = seed;
  return s;
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
  if (total_steps == 0) throw ArgumentError("cosine_lr: total_steps must be positive");
  if (step > total_steps) throw ArgumentError("cosine_lr: step beyond total_steps");
  if (step == total_steps) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_update(TrainState& state, const Parameters& grads, const OptimizerConfig& cfg) {
  zip_params(
      [](const std::string& name, const Matrix& p, const Matrix& g) {
        if (!p.same_shape(g)) throw ArgumentError("gradient shape mismatch for " + name);
        if (!g.all_finite()) throw NumericError("non-finite gradient in " + name);
      },
      state.params, grads);

  const double lr = cosine_lr(std::min<std::uint64_t>(state.step, cfg.total_steps), cfg.total_steps, cfg.base_lr);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  zip_params(
      [&](const std::string&, Matrix& p, const Matrix& g, Matrix& m, Matrix& v) {
        for (std::size_t k = 0; k < p.data.size(); ++k) {
          m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * g.data[k];
          v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * g.data[k] * g.data[k];
          const double mhat = m.data[k] / c1;
          const double vhat = v.data[k] / c2;
          p.data[k] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
      },
      state.params, grads, state.first_moment, state.second_moment);
  ++state.step;
}

namespace {

ClipExample finish_clip(const VideoClipSample& clip, std::vector<std::size_t> raw, const ModelConfig& model,
                        const OptimizerConfig& opt, std::uint64_t seed, bool train_mode) {
  ClipExample ex;
  ex.frames = resize_crop(clip.frames.select(raw), model.image_size, opt.scales, seed, train_mode);
  ex.pnr_target = first_sample_at_or_after(raw, clip.pnr_index);
  ex.osc_label = clip.osc_label;
  ex.raw_indices = std::move(raw);
  return ex;
}

}  // namespace

ClipExample prepare_training_clip(const VideoClipSample& clip, const ModelConfig& model, const OptimizerConfig& opt,
                                  std::uint64_t seed) {
  const auto [first, last] = training_window(clip.frames.count, opt.sample_jitter, seed);
  return finish_clip(clip, sample_frames(first, last, model.frames), model, opt, seed, true);
}

ClipExample prepare_eval_clip(const VideoClipSample& clip, const ModelConfig& model, const OptimizerConfig& opt) {
  if (clip.frames.count == 0) throw ArgumentError("prepare_eval_clip: empty clip");
  return finish_clip(clip, sample_frames(0, clip.frames.count - 1, model.frames), model, opt, 0, false);
}

namespace {

struct UnitResult {
  Parameters grads;
  double haog = 0, box_giou = 0, box_l1 = 0, existence = 0, contact = 0;
  double vid = 0, con = 0;
  std::vector<WeightedTerm> terms;
  std::uint64_t signature = 0;
};

void run_image_unit(const ModelConfig& cfg, const Parameters& params, const SceneImage& image, double seed_weight,
                    bool want_grads, UnitResult& out) {
  ad::Tape tape;
  const BoundParams p = bind_parameters(tape, params, want_grads ? &out.grads : nullptr);
  const ForwardResult fwd = forward(cfg, p, image.pixels);
  const HaogLossVars loss = loss_haog(predict_haog(cfg, p, fwd.object_tokens), image.haog);
  out.haog = loss.total.item();
  out.box_giou = loss.box_giou.item();
  out.box_l1 = loss.box_l1.item();
  out.existence = loss.existence.item();
  out.contact = loss.contact.item();
  out.terms = {{seed_weight, out.box_giou}, {seed_weight, out.box_l1}, {seed_weight, out.existence},
               {seed_weight, out.contact}};
  out.signature = tape.branch_signature();
  if (want_grads) tape.backward(loss.total, seed_weight);
}

void run_clip_unit(const ModelConfig& cfg, const Parameters& params, const ClipExample& clip, double vid_weight,
                   double con_weight, bool want_grads, UnitResult& out) {
  ad::Tape tape;
  const BoundParams p = bind_parameters(tape, params, want_grads ? &out.grads : nullptr);
  const ForwardResult fwd = forward(cfg, p, clip.frames);
  ad::Var scores = predict_frame_scores(cfg, p, fwd.patch_tokens);
  ad::Var osc = predict_osc(p, pool_cls(fwd.patch_tokens));
  ad::Var vid = loss_video(scores, clip.pnr_target, osc, clip.osc_label);

  std::vector<ad::Var> per_frame;
  per_frame.reserve(clip.frames.count);
  for (std::size_t t = 0; t < clip.frames.count; ++t)
    per_frame.push_back(forward(cfg, p, clip.frames.frame(t)).object_tokens);
  ad::Var con = loss_consistency(p, fwd.object_tokens, ad::concat_rows(per_frame));

  out.vid = vid.item();
  out.con = con.item();
  out.terms = {{vid_weight, out.vid}, {con_weight, out.con}};
  out.signature = tape.branch_signature();
  if (want_grads) tape.backward(ad::add(ad::scale(vid, vid_weight), ad::scale(con, con_weight)));
}

}  // namespace

BatchEvaluation evaluate_batch(const ModelConfig& cfg, const Parameters& params, const Batch& batch,
                               const LossWeights& weights, Parameters* grads, std::size_t threads) {
  weights.validate();
  const std::size_t ni = batch.images.size();
  const std::size_t nc = batch.clips.size();
  const bool want_grads = grads != nullptr;
  std::vector<UnitResult> units(ni + nc);
  if (want_grads)
    for (auto& u : units) u.grads = zero_parameters(cfg);

  const double w_haog = ni ? weights.lambda_haog / static_cast<double>(ni) : 0.0;
  const double w_vid = nc ? weights.lambda_vid / static_cast<double>(nc) : 0.0;
  const double w_con = nc ? weights.lambda_con / static_cast<double>(nc) : 0.0;
  detail::parallel_for(ni + nc, threads, [&](std::size_t i) {
    if (i < ni)
      run_image_unit(cfg, params, batch.images[i], w_haog, want_grads, units[i]);
    else
      run_clip_unit(cfg, params, batch.clips[i - ni], w_vid, w_con, want_grads, units[i]);
  });

  BatchEvaluation out;
  LossBreakdown& b = out.breakdown;
  std::uint64_t sig = 0x84222325cbf29ce4ULL;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const UnitResult& u = units[i];
    if (i < ni) {
      b.l_haog += u.haog;
      b.haog.box_giou += u.box_giou;
      b.haog.box_l1 += u.box_l1;
      b.haog.existence += u.existence;
      b.haog.contact += u.contact;
    } else {
      b.l_vid += u.vid;
      b.l_con += u.con;
    }
    sig = derive_seed(sig, u.signature);
    out.terms.insert(out.terms.end(), u.terms.begin(), u.terms.end());
    if (want_grads)
      zip_params(
          [](const std::string&, Matrix& dst, const Matrix& src) {
            for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += src.data[k];
          },
          *grads, u.grads);
  }
  if (ni) {
    const double inv = 1.0 / static_cast<double>(ni);
    b.l_haog *= inv;
    b.haog.box_giou *= inv;
    b.haog.box_l1 *= inv;
    b.haog.existence *= inv;
    b.haog.contact *= inv;
  }
  if (nc) {
    b.l_vid /= static_cast<double>(nc);
    b.l_con /= static_cast<double>(nc);
  }
  finalize_total(b, weights);
  out.branch_signature = sig;
  return out;
}

LossBreakdown train_step(TrainState& state, const ModelConfig& cfg, const OptimizerConfig& opt, const Batch& batch,
                         const LossWeights& weights, std::size_t threads) {
  if (batch.images.empty() || batch.clips.empty()) throw ArgumentError("train_step: image and clip batches must be non-empty");
  Parameters grads = zero_parameters(cfg);
  const BatchEvaluation ev = evaluate_batch(cfg, state.params, batch, weights, &grads, threads);
  if (!std::isfinite(ev.breakdown.l_total)) throw NumericError("train_step: non-finite loss");
  adam_update(state, grads, opt);
  return ev.breakdown;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch, std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, stream), epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)))]);
  return order;
}

std::vector<std::size_t> take(std::size_t n, std::size_t per_batch, std::uint64_t step, std::uint64_t seed,
                              std::uint64_t stream) {
  std::vector<std::size_t> out;
  if (n == 0) return out;
  per_batch = std::min(per_batch, n);
  for (std::size_t k = 0; k < per_batch; ++k) {
    const std::uint64_t global = step * per_batch + k;
    const auto order = epoch_order(n, seed, global / n, stream);
    out.push_back(order[global % n]);
  }
  return out;
}

}  // namespace

Batch make_batch(const TrainingData& data, const ModelConfig& model, const OptimizerConfig& opt, std::uint64_t step,
                 std::uint64_t seed) {
  Batch batch;
  for (std::size_t i : take(data.images.size(), opt.images_per_batch, step, seed, 1))
    batch.images.push_back(data.images[i]);
  std::size_t k = 0;
  for (std::size_t i : take(data.clips.size(), opt.videos_per_batch, step, seed, 2))
    batch.clips.push_back(prepare_training_clip(data.clips[i], model, opt, derive_seed(seed, (step << 20) + k++)));
  return batch;
}

void train(TrainState& state, const TrainingData& data, const ModelConfig& model, const OptimizerConfig& opt,
           const LossWeights& weights, const StepCallback& on_step, std::size_t threads) {
  opt.validate();
  while (state.step < opt.total_steps) {
    StepRecord rec;
    rec.step = state.step;
    rec.lr = cosine_lr(state.step, opt.total_steps, opt.base_lr);
    const Batch batch = make_batch(data, model, opt, state.step, state.seed);
    rec.breakdown = train_step(state, model, opt, batch, weights, threads);
    if (on_step) on_step(rec, state);
  }
}

LossEvaluator batch_loss(const ModelConfig& cfg, const Batch& batch, const LossWeights& weights,
                         std::size_t threads) {
  return [cfg, batch, weights, threads](const Parameters& params, Parameters* grads) {
    const BatchEvaluation ev = evaluate_batch(cfg, params, batch, weights, grads, threads);
    return LossProbe{ev.breakdown.l_total, ev.branch_signature, ev.terms};
  };
}

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
}

GradcheckReport gradcheck(const Parameters& params, const LossEvaluator& loss, double epsilon, std::size_t samples,
                          std::uint64_t seed) {
  if (!(epsilon > 0)) throw ArgumentError("gradcheck: epsilon must be positive");
  Parameters grads = params;
  zip_params([](const std::string&, Matrix& g) { std::fill(g.data.begin(), g.data.end(), 0.0); }, grads);
  loss(params, &grads);

  Parameters probe = params;
  struct Slot {
    std::string name;
    Matrix* value;
    const Matrix* grad;
  };
  std::vector<Slot> slots;
  std::size_t total = 0;
  zip_params(
      [&](const std::string& name, Matrix& v, const Matrix& g) {
        slots.push_back({name, &v, &g});
        total += v.size();
      },
      probe, grads);

  GradcheckReport report;
  Rng rng(seed);
  auto pick_uniform = [&]() -> std::pair<std::size_t, std::size_t> {
    auto flat = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(total - 1)));
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (flat < slots[s].value->size()) return {s, flat};
      flat -= slots[s].value->size();
    }
    return {slots.size() - 1, 0};
  };

  constexpr std::size_t kMaxRedraws = 50;
  for (std::size_t n = 0; n < samples; ++n) {
    const bool stratified = n < slots.size() && samples >= slots.size();
    std::size_t redraws = 0;
    while (true) {
      std::size_t s, idx;
      if (stratified) {
        s = n;
        idx = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(slots[s].value->size() - 1)));
      } else {
        std::tie(s, idx) = pick_uniform();
      }
      double& x = slots[s].value->data[idx];
      const double saved = x;
      x = saved + epsilon;
      const LossProbe plus = loss(probe, nullptr);
      x = saved - epsilon;
      const LossProbe minus = loss(probe, nullptr);
      x = saved;
      if (plus.signature != minus.signature && redraws < kMaxRedraws) {
        ++report.resampled;
        ++redraws;
        continue;
      }
      double diff = plus.value - minus.value;
      if (!plus.terms.empty() && plus.terms.size() == minus.terms.size()) {
        diff = 0.0;
        for (std::size_t k = 0; k < plus.terms.size(); ++k)
          diff += plus.terms[k].weight * (plus.terms[k].value - minus.terms[k].value);
      }
      const double numeric = diff / (2.0 * epsilon);
      const double analytic = slots[s].grad->data[idx];
      const double err = relative_error(analytic, numeric);
      ++report.checked;
      if (err >= report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = slots[s].name;
        report.worst_index = idx;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
      break;
    }
  }
  return report;
}

}  // namespace svit
