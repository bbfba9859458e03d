#pragma once

// Shared image/video transformer with object tokens.
//
// Every frame is patchified by the same 2-D kernel; patch tokens get a
// spatial embedding plus the temporal embedding of their frame. Each frame
// also contributes `object_tokens` tokens initialised as prompt_i + temporal_t.
// All T*H*W + T*n tokens go through pre-norm blocks with joint space-time
// attention. A still image is processed exactly like a one-frame clip.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svit/autodiff.hpp"
#include "svit/frames.hpp"
#include "svit/haog.hpp"
#include "svit/matrix.hpp"

namespace svit {

struct ModelConfig {
  std::uint32_t frames = 8;  // T, sampled frames per clip
  std::uint32_t patch_size = 8;
  std::uint32_t image_size = 32;
  std::uint32_t dim = 32;
  std::uint32_t object_tokens = 4;
  std::uint32_t depth = 2;
  std::uint32_t heads = 4;
  std::uint32_t mlp_hidden = 128;

  std::uint32_t grid() const { return image_size / patch_size; }
  std::uint32_t patches_per_frame() const { return grid() * grid(); }
  std::uint32_t patch_dim() const { return patch_size * patch_size * 3; }
  /// Tokens in the joint sequence for a stack of `t` frames.
  std::size_t sequence_length(std::size_t t) const {
    return t * patches_per_frame() + t * object_tokens;
  }

  /// Throws ConfigError when the configuration is inconsistent.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct BlockSet {
  T norm1_gain, norm1_bias;
  // Keys carry no bias: softmax ignores a per-query shift, so it could never
  // receive a gradient.
  T qkv_weight, qv_bias;
  T proj_weight, proj_bias;
  T norm2_gain, norm2_bias;
  T fc1_weight, fc1_bias;
  T fc2_weight, fc2_bias;
};

/// Every learnable tensor. Instantiated with Matrix for storage and with
/// ad::Var for a binding onto a tape.
template <class T>
struct ParamSet {
  T patch_weight, patch_bias;
  T pos_spatial;     // (H*W) x d
  T pos_temporal;    // T x d
  T object_prompts;  // n x d
  std::vector<BlockSet<T>> blocks;
  T box_weight, box_bias;          // d -> 4
  T exist_weight, exist_bias;      // d -> 1
  T contact_weight, contact_bias;  // 2d -> 2
  T pnr_weight, pnr_bias;          // d -> 1
  T osc_weight, osc_bias;          // d -> 1
  T consistency_weight, consistency_bias;  // d -> d
};

using Parameters = ParamSet<Matrix>;
using BoundParams = ParamSet<ad::Var>;

/// Calls f(name, a.field, b.field, ...) for every tensor, in a fixed order
/// that is also the checkpoint order.
template <class F, class S0, class... S>
void zip_params(F&& f, S0& s0, S&... s) {
  f(std::string("patch.weight"), s0.patch_weight, s.patch_weight...);
  f(std::string("patch.bias"), s0.patch_bias, s.patch_bias...);
  f(std::string("pos.spatial"), s0.pos_spatial, s.pos_spatial...);
  f(std::string("pos.temporal"), s0.pos_temporal, s.pos_temporal...);
  f(std::string("object.prompts"), s0.object_prompts, s.object_prompts...);
  for (std::size_t b = 0; b < s0.blocks.size(); ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    f(p + "norm1.gain", s0.blocks[b].norm1_gain, s.blocks[b].norm1_gain...);
    f(p + "norm1.bias", s0.blocks[b].norm1_bias, s.blocks[b].norm1_bias...);
    f(p + "qkv.weight", s0.blocks[b].qkv_weight, s.blocks[b].qkv_weight...);
    f(p + "qv.bias", s0.blocks[b].qv_bias, s.blocks[b].qv_bias...);
    f(p + "proj.weight", s0.blocks[b].proj_weight, s.blocks[b].proj_weight...);
    f(p + "proj.bias", s0.blocks[b].proj_bias, s.blocks[b].proj_bias...);
    f(p + "norm2.gain", s0.blocks[b].norm2_gain, s.blocks[b].norm2_gain...);
    f(p + "norm2.bias", s0.blocks[b].norm2_bias, s.blocks[b].norm2_bias...);
    f(p + "fc1.weight", s0.blocks[b].fc1_weight, s.blocks[b].fc1_weight...);
    f(p + "fc1.bias", s0.blocks[b].fc1_bias, s.blocks[b].fc1_bias...);
    f(p + "fc2.weight", s0.blocks[b].fc2_weight, s.blocks[b].fc2_weight...);
    f(p + "fc2.bias", s0.blocks[b].fc2_bias, s.blocks[b].fc2_bias...);
  }
  f(std::string("head.box.weight"), s0.box_weight, s.box_weight...);
  f(std::string("head.box.bias"), s0.box_bias, s.box_bias...);
  f(std::string("head.exist.weight"), s0.exist_weight, s.exist_weight...);
  f(std::string("head.exist.bias"), s0.exist_bias, s.exist_bias...);
  f(std::string("head.contact.weight"), s0.contact_weight, s.contact_weight...);
  f(std::string("head.contact.bias"), s0.contact_bias, s.contact_bias...);
  f(std::string("head.pnr.weight"), s0.pnr_weight, s.pnr_weight...);
  f(std::string("head.pnr.bias"), s0.pnr_bias, s.pnr_bias...);
  f(std::string("head.osc.weight"), s0.osc_weight, s.osc_weight...);
  f(std::string("head.osc.bias"), s0.osc_bias, s.osc_bias...);
  f(std::string("consistency.weight"), s0.consistency_weight, s.consistency_weight...);
  f(std::string("consistency.bias"), s0.consistency_bias, s.consistency_bias...);
}

/// Zero-filled tensors with the shapes implied by `cfg`.
Parameters zero_parameters(const ModelConfig& cfg);
/// Random initialisation: embeddings and prompts N(0, 0.02), linear layers
/// N(0, 1/fan_in), heads N(0, 0.02), norms (1, 0), consistency FC identity.
Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed);
/// Total number of scalars.
std::size_t parameter_count(const Parameters& p);
/// Checks every tensor shape against `cfg`; throws ArgumentError otherwise.
void check_parameter_shapes(const ModelConfig& cfg, const Parameters& p);

/// Places every tensor on `tape`; adjoints accumulate into `grads` when it is
/// non-null (it must have the same shapes as `params`).
BoundParams bind_parameters(ad::Tape& tape, const Parameters& params, Parameters* grads);

using AttentionHook = std::function<void(std::size_t block, std::size_t head, const Matrix& probs)>;

/// Fixed input normalisation applied to every pixel before patch embedding.
/// Scene pixels cluster around mid-grey with small spread; without centring
/// the patch projection sees almost no contrast.
inline constexpr double kPixelMean = 0.5;
inline constexpr double kPixelStd = 0.25;

/// (frames*H*W) x (p*p*3) matrix of normalised patches, patch-major within a
/// frame, (row, col, channel) order inside a patch.
Matrix extract_patches(const ModelConfig& cfg, const Frames& frames);

/// Patch tokens for a stack of 1..T frames: (frames*H*W) x d.
ad::Var patchify(const ModelConfig& cfg, const BoundParams& p, const Frames& frames);
/// Object tokens before attention: (frames*n) x d, row t*n + i = o_i + r_t.
ad::Var init_object_tokens(const ModelConfig& cfg, const BoundParams& p, std::size_t frames);

struct ForwardResult {
  ad::Var patch_tokens;   // (frames*H*W) x d
  ad::Var object_tokens;  // (frames*n) x d
  std::size_t frames = 0;
};

ForwardResult forward(const ModelConfig& cfg, const BoundParams& p, const Frames& frames,
                      const AttentionHook* hook = nullptr);

/// Mean over every patch token: 1 x d.
ad::Var pool_cls(ad::Var patch_out);
/// One logit per frame from that frame's mean patch token: frames x 1.
ad::Var predict_frame_scores(const ModelConfig& cfg, const BoundParams& p, ad::Var patch_out);
ad::Var predict_osc(const BoundParams& p, ad::Var f_cls);
/// FC applied to clip object tokens before the frame/clip comparison.
ad::Var consistency_projection(const BoundParams& p, ad::Var clip_object_tokens);

struct HaogHeadOutput {
  ad::Var box_params;      // 4 x 4, (cx, cy, w, h) in (0, 1)
  ad::Var exist_logits;    // 4 x 1
  ad::Var contact_logits;  // 2 x 2, row k from concat(token_k, token_{k+2})
};

/// Expects exactly four object tokens (one frame or one image).
HaogHeadOutput predict_haog(const ModelConfig& cfg, const BoundParams& p, ad::Var object_tokens);

/// Corner box from (cx, cy, w, h), clipped to [0, 1].
BoundingBox box_from_center(double cx, double cy, double w, double h);

/// Plain-value view of a HaogHeadOutput.
struct HaogPrediction {
  std::array<std::array<double, 4>, kHaogNodes> box_params{};
  std::array<double, kHaogNodes> exist_logits{};
  std::array<std::array<double, 2>, kHaogEdges> contact_logits{};

  BoundingBox box(std::size_t slot) const;
  static HaogPrediction from(const HaogHeadOutput& out);
};

/// Inference without gradients.
struct Inference {
  Matrix patch_tokens;
  Matrix object_tokens;
  std::vector<double> frame_scores;  // logits
  double osc_logit = 0.0;
};

Inference infer(const ModelConfig& cfg, const Parameters& params, const Frames& frames,
                const AttentionHook* hook = nullptr);
HaogPrediction infer_haog(const ModelConfig& cfg, const Parameters& params, const Frames& image);

}  // namespace svit
