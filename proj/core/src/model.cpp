#include "svit/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "svit/errors.hpp"

namespace svit {

void ModelConfig::validate() const {
  if (frames == 0) throw ConfigError("frames must be >= 1");
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw ConfigError("image_size must be a positive multiple of patch_size");
  if (dim == 0 || heads == 0 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (object_tokens == 0) throw ConfigError("object_tokens must be >= 1");
  if (mlp_hidden == 0) throw ConfigError("mlp_hidden must be >= 1");
}

Parameters zero_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  Parameters p;
  p.patch_weight = Matrix(cfg.patch_dim(), d);
  p.patch_bias = Matrix(1, d);
  p.pos_spatial = Matrix(cfg.patches_per_frame(), d);
  p.pos_temporal = Matrix(cfg.frames, d);
  p.object_prompts = Matrix(cfg.object_tokens, d);
  p.blocks.resize(cfg.depth);
  for (auto& b : p.blocks) {
    b.norm1_gain = Matrix(1, d);
    b.norm1_bias = Matrix(1, d);
    b.qkv_weight = Matrix(d, 3 * d);
    b.qv_bias = Matrix(1, 2 * d);
    b.proj_weight = Matrix(d, d);
    b.proj_bias = Matrix(1, d);
    b.norm2_gain = Matrix(1, d);
    b.norm2_bias = Matrix(1, d);
    b.fc1_weight = Matrix(d, cfg.mlp_hidden);
    b.fc1_bias = Matrix(1, cfg.mlp_hidden);
    b.fc2_weight = Matrix(cfg.mlp_hidden, d);
    b.fc2_bias = Matrix(1, d);
  }
  p.box_weight = Matrix(d, 4);
  p.box_bias = Matrix(1, 4);
  p.exist_weight = Matrix(d, 1);
  p.exist_bias = Matrix(1, 1);
  p.contact_weight = Matrix(2 * d, 2);
  p.contact_bias = Matrix(1, 2);
  p.pnr_weight = Matrix(d, 1);
  p.pnr_bias = Matrix(1, 1);
  p.osc_weight = Matrix(d, 1);
  p.osc_bias = Matrix(1, 1);
  p.consistency_weight = Matrix(d, d);
  p.consistency_bias = Matrix(1, d);
  return p;
}

Parameters init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters p = zero_parameters(cfg);
  std::mt19937_64 engine(seed);
  auto normal = [&](Matrix& m, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.data) v = dist(engine);
  };
  auto fan_in = [&](Matrix& m) { normal(m, 1.0 / std::sqrt(static_cast<double>(m.rows))); };

  fan_in(p.patch_weight);
  normal(p.pos_spatial, 0.02);
  normal(p.pos_temporal, 0.02);
  normal(p.object_prompts, 0.02);
  for (auto& b : p.blocks) {
    b.norm1_gain = Matrix(1, cfg.dim, 1.0);
    b.norm2_gain = Matrix(1, cfg.dim, 1.0);
    fan_in(b.qkv_weight);
    fan_in(b.proj_weight);
    fan_in(b.fc1_weight);
    fan_in(b.fc2_weight);
  }
  normal(p.box_weight, 0.02);
  normal(p.exist_weight, 0.02);
  normal(p.contact_weight, 0.02);
  normal(p.pnr_weight, 0.02);
  normal(p.osc_weight, 0.02);
  for (std::size_t i = 0; i < cfg.dim; ++i) p.consistency_weight(i, i) = 1.0;
  return p;
}

std::size_t parameter_count(const Parameters& p) {
  std::size_t n = 0;
  zip_params([&](const std::string&, const Matrix& m) { n += m.size(); }, p);
  return n;
}

void check_parameter_shapes(const ModelConfig& cfg, const Parameters& p) {
  const Parameters ref = zero_parameters(cfg);
  if (ref.blocks.size() != p.blocks.size())
    throw ArgumentError("parameter depth " + std::to_string(p.blocks.size()) + " does not match config depth " +
                        std::to_string(ref.blocks.size()));
  zip_params(
      [](const std::string& name, const Matrix& want, const Matrix& have) {
        if (!want.same_shape(have))
          throw ArgumentError("parameter " + name + " has shape " + std::to_string(have.rows) + "x" +
                              std::to_string(have.cols) + ", expected " + std::to_string(want.rows) + "x" +
                              std::to_string(want.cols));
      },
      ref, p);
}

BoundParams bind_parameters(ad::Tape& tape, const Parameters& params, Parameters* grads) {
  BoundParams out;
  out.blocks.resize(params.blocks.size());
  if (grads != nullptr) {
    if (grads->blocks.size() != params.blocks.size()) throw ArgumentError("gradient buffer depth mismatch");
    zip_params(
        [&](const std::string& name, const Matrix& value, Matrix& grad, ad::Var& var) {
          if (!grad.same_shape(value)) throw ArgumentError("gradient buffer shape mismatch for " + name);
          var = tape.leaf(value, &grad);
        },
        params, *grads, out);
  } else {
    zip_params([&](const std::string&, const Matrix& value, ad::Var& var) { var = tape.constant(value); }, params,
               out);
  }
  return out;
}

Matrix extract_patches(const ModelConfig& cfg, const Frames& frames) {
  const std::size_t P = cfg.patch_size, G = cfg.grid();
  Matrix out(frames.count * G * G, cfg.patch_dim());
  for (std::size_t t = 0; t < frames.count; ++t)
    for (std::size_t gy = 0; gy < G; ++gy)
      for (std::size_t gx = 0; gx < G; ++gx) {
        double* row = out.data.data() + ((t * G + gy) * G + gx) * out.cols;
        std::size_t k = 0;
        for (std::size_t py = 0; py < P; ++py)
          for (std::size_t px = 0; px < P; ++px)
            for (std::size_t c = 0; c < 3; ++c) row[k++] = (frames.at(t, gy * P + py, gx * P + px, c) - kPixelMean) / kPixelStd;
      }
  return out;
}

namespace {

void check_frames(const ModelConfig& cfg, const Frames& frames) {
  if (frames.count == 0 || frames.count > cfg.frames)
    throw ArgumentError("expected 1.." + std::to_string(cfg.frames) + " frames, got " + std::to_string(frames.count));
  if (frames.height != cfg.image_size || frames.width != cfg.image_size)
    throw ArgumentError("frame size " + std::to_string(frames.height) + "x" + std::to_string(frames.width) +
                        " does not match image_size " + std::to_string(cfg.image_size));
  if (frames.pixels.size() != frames.count * frames.frame_stride())
    throw ArgumentError("pixel buffer size does not match frame dimensions");
}

ad::Tape& tape_of(const BoundParams& p) { return *p.patch_weight.tape(); }

}  // namespace

ad::Var patchify(const ModelConfig& cfg, const BoundParams& p, const Frames& frames) {
  check_frames(cfg, frames);
  ad::Tape& tape = tape_of(p);
  const std::size_t hw = cfg.patches_per_frame();
  std::vector<std::size_t> spatial_idx, temporal_idx;
  spatial_idx.reserve(frames.count * hw);
  temporal_idx.reserve(frames.count * hw);
  for (std::size_t t = 0; t < frames.count; ++t)
    for (std::size_t s = 0; s < hw; ++s) {
      spatial_idx.push_back(s);
      temporal_idx.push_back(t);
    }
  ad::Var patches = tape.constant(extract_patches(cfg, frames));
  ad::Var tokens = ad::linear(patches, p.patch_weight, p.patch_bias);
  tokens = ad::add(tokens, ad::gather_rows(p.pos_spatial, std::move(spatial_idx)));
  return ad::add(tokens, ad::gather_rows(p.pos_temporal, std::move(temporal_idx)));
}

ad::Var init_object_tokens(const ModelConfig& cfg, const BoundParams& p, std::size_t frames) {
  if (frames == 0 || frames > cfg.frames) throw ArgumentError("init_object_tokens: frame count out of range");
  const std::size_t n = cfg.object_tokens;
  std::vector<std::size_t> prompt_idx, temporal_idx;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      prompt_idx.push_back(i);
      temporal_idx.push_back(t);
    }
  return ad::add(ad::gather_rows(p.object_prompts, std::move(prompt_idx)),
                 ad::gather_rows(p.pos_temporal, std::move(temporal_idx)));
}

namespace {

ad::Var attention(const ModelConfig& cfg, const BlockSet<ad::Var>& b, ad::Var x, std::size_t block_index,
                  const AttentionHook* hook) {
  const std::size_t d = cfg.dim, heads = cfg.heads, dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Tape& tape = *x.tape();
  const ad::Var bias_parts[3] = {ad::slice_cols(b.qv_bias, 0, d), tape.constant(Matrix(1, d)),
                                 ad::slice_cols(b.qv_bias, d, d)};
  ad::Var qkv = ad::add_row(ad::matmul(x, b.qkv_weight), ad::concat_cols(bias_parts));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var q = ad::slice_cols(qkv, h * dh, dh);
    ad::Var k = ad::slice_cols(qkv, d + h * dh, dh);
    ad::Var v = ad::slice_cols(qkv, 2 * d + h * dh, dh);
    ad::Var probs = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_scale));
    if (hook != nullptr && *hook) (*hook)(block_index, h, probs.value());
    outs.push_back(ad::matmul(probs, v));
  }
  return ad::linear(ad::concat_cols(outs), b.proj_weight, b.proj_bias);
}

}  // namespace

ForwardResult forward(const ModelConfig& cfg, const BoundParams& p, const Frames& frames, const AttentionHook* hook) {
  check_frames(cfg, frames);
  if (!std::all_of(frames.pixels.begin(), frames.pixels.end(), [](double v) { return std::isfinite(v); }))
    throw NumericError("forward: non-finite input pixels");

  const std::size_t t = frames.count;
  const std::size_t num_patches = t * cfg.patches_per_frame();
  const ad::Var parts[2] = {patchify(cfg, p, frames), init_object_tokens(cfg, p, t)};
  ad::Var x = ad::concat_rows(parts);

  for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto& b = p.blocks[bi];
    x = ad::add(x, attention(cfg, b, ad::layer_norm(x, b.norm1_gain, b.norm1_bias), bi, hook));
    ad::Var h = ad::gelu(ad::linear(ad::layer_norm(x, b.norm2_gain, b.norm2_bias), b.fc1_weight, b.fc1_bias));
    x = ad::add(x, ad::linear(h, b.fc2_weight, b.fc2_bias));
  }
  // Outputs are the raw residual stream. A closing LayerNorm would rescale
  // every object token to unit variance, which inflates the L1 consistency
  // penalty and in practice pushed object tokens towards input-independent
  // constants.
  ForwardResult out;
  out.frames = t;
  out.patch_tokens = ad::slice_rows(x, 0, num_patches);
  out.object_tokens = ad::slice_rows(x, num_patches, t * cfg.object_tokens);
  return out;
}

ad::Var pool_cls(ad::Var patch_out) { return ad::mean_rows(patch_out); }

ad::Var predict_frame_scores(const ModelConfig& cfg, const BoundParams& p, ad::Var patch_out) {
  return ad::linear(ad::mean_row_groups(patch_out, cfg.patches_per_frame()), p.pnr_weight, p.pnr_bias);
}

ad::Var predict_osc(const BoundParams& p, ad::Var f_cls) { return ad::linear(f_cls, p.osc_weight, p.osc_bias); }

ad::Var consistency_projection(const BoundParams& p, ad::Var clip_object_tokens) {
  return ad::linear(clip_object_tokens, p.consistency_weight, p.consistency_bias);
}

HaogHeadOutput predict_haog(const ModelConfig& cfg, const BoundParams& p, ad::Var object_tokens) {
  if (cfg.object_tokens != kHaogNodes || object_tokens.rows() != kHaogNodes)
    throw ConfigError("HAOG prediction needs exactly 4 object tokens, got " + std::to_string(object_tokens.rows()));
  HaogHeadOutput out;
  out.box_params = ad::sigmoid(ad::linear(object_tokens, p.box_weight, p.box_bias));
  out.exist_logits = ad::linear(object_tokens, p.exist_weight, p.exist_bias);
  const ad::Var pair[2] = {ad::slice_rows(object_tokens, 0, 2), ad::slice_rows(object_tokens, 2, 2)};
  out.contact_logits = ad::linear(ad::concat_cols(pair), p.contact_weight, p.contact_bias);
  return out;
}

BoundingBox box_from_center(double cx, double cy, double w, double h) {
  return {std::clamp(cx - 0.5 * w, 0.0, 1.0), std::clamp(cy - 0.5 * h, 0.0, 1.0), std::clamp(cx + 0.5 * w, 0.0, 1.0),
          std::clamp(cy + 0.5 * h, 0.0, 1.0)};
}

BoundingBox HaogPrediction::box(std::size_t slot) const {
  const auto& b = box_params[slot];
  return box_from_center(b[0], b[1], b[2], b[3]);
}

HaogPrediction HaogPrediction::from(const HaogHeadOutput& out) {
  HaogPrediction p;
  const Matrix& boxes = out.box_params.value();
  const Matrix& exist = out.exist_logits.value();
  const Matrix& contact = out.contact_logits.value();
  for (std::size_t j = 0; j < kHaogNodes; ++j) {
    for (std::size_t c = 0; c < 4; ++c) p.box_params[j][c] = boxes(j, c);
    p.exist_logits[j] = exist(j, 0);
  }
  for (std::size_t k = 0; k < kHaogEdges; ++k)
    for (std::size_t c = 0; c < 2; ++c) p.contact_logits[k][c] = contact(k, c);
  return p;
}

Inference infer(const ModelConfig& cfg, const Parameters& params, const Frames& frames, const AttentionHook* hook) {
  ad::Tape tape;
  const BoundParams p = bind_parameters(tape, params, nullptr);
  const ForwardResult fwd = forward(cfg, p, frames, hook);
  Inference out;
  out.patch_tokens = fwd.patch_tokens.value();
  out.object_tokens = fwd.object_tokens.value();
  out.frame_scores = predict_frame_scores(cfg, p, fwd.patch_tokens).value().data;
  out.osc_logit = predict_osc(p, pool_cls(fwd.patch_tokens)).item();
  return out;
}

HaogPrediction infer_haog(const ModelConfig& cfg, const Parameters& params, const Frames& image) {
  if (image.count != 1) throw ArgumentError("infer_haog expects a single image");
  ad::Tape tape;
  const BoundParams p = bind_parameters(tape, params, nullptr);
  const ForwardResult fwd = forward(cfg, p, image);
  return HaogPrediction::from(predict_haog(cfg, p, fwd.object_tokens));
}

}  // namespace svit
