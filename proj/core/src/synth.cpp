#include "svit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svit/errors.hpp"
#include "svit/rng.hpp"

namespace svit {

void GenConfig::validate(std::uint32_t patch_size) const {
  if (image_size < 16) throw ConfigError("image_size must be at least 16");
  if (patch_size == 0 || image_size % patch_size != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  if (raw_frames < 2) throw ConfigError("raw_frames must be at least 2");
  if (grid_frames < 2 || grid_frames > raw_frames) throw ConfigError("grid_frames must lie in [2, raw_frames]");
  if (!(fps > 0) || !std::isfinite(fps)) throw ConfigError("fps must be positive");
  if (speed_min == 0 || speed_min > speed_max) throw ConfigError("need 0 < speed_min <= speed_max");
  if (!(contact_threshold > 0 && contact_threshold < 1)) throw ConfigError("contact_threshold must lie in (0, 1)");
  for (double p : {hand_prob, object_prob, no_change_prob})
    if (!(p >= 0 && p <= 1)) throw ConfigError("probabilities must lie in [0, 1]");
}

namespace {

// Pixel values are snapped to k/255 and then to float precision so that a
// dataset written as 32-bit floats reloads bit-identically.
double quantize(double v) {
  const double k = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<double>(static_cast<float>(k / 255.0));
}

struct PixRect {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // half-open [x1, x2) x [y1, y2)

  int w() const { return x2 - x1; }
  int h() const { return y2 - y1; }
  BoundingBox normalized(int size) const {
    const double s = static_cast<double>(size);
    return {x1 / s, y1 / s, x2 / s, y2 / s};
  }
};

PixRect rect(int x, int y, int w, int h) { return {x, y, x + w, y + h}; }

int irand(Rng& rng, int lo, int hi) { return static_cast<int>(rng.integer(lo, hi)); }

void fill_background(Frames& f, Rng& rng) {
  // One texture shared by every frame of the stack.
  const std::size_t stride = f.frame_stride();
  for (std::size_t k = 0; k < stride; ++k) f.pixels[k] = quantize(0.45 + 0.1 * (rng.uniform() - 0.5));
  for (std::size_t t = 1; t < f.count; ++t)
    std::copy_n(f.pixels.begin(), stride, f.pixels.begin() + static_cast<std::ptrdiff_t>(t * stride));
}

void paint(Frames& f, std::size_t t, const PixRect& r, const std::array<double, 3>& color) {
  for (int y = r.y1; y < r.y2; ++y)
    for (int x = r.x1; x < r.x2; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        f.at(t, static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = color[c];
}

// Per-image-size geometry limits, in pixels.
struct Layout {
  int size, half;
  int hand_w_lo, hand_w_hi, hand_h_lo, hand_h_hi;
  int obj_min;
  int obj_y_lo, obj_y_hi;

  explicit Layout(int s) : size(s), half(s / 2) {
    hand_w_lo = std::max(3, 3 * s / 16);
    hand_w_hi = std::max(hand_w_lo, 9 * s / 32);
    hand_h_lo = std::max(3, 5 * s / 32);
    hand_h_hi = std::max(hand_h_lo, s / 4);
    obj_min = std::max(2, 3 * s / 32);
    obj_y_lo = std::max(1, s / 16);
    obj_y_hi = std::max(obj_y_lo, 5 * s / 16);
  }
  int side_lo(int side) const { return side * half; }
};

// Objects are strictly narrower and shorter than their hand so that an object
// painted over a hand never hides a full row or column of it.
struct SidePlan {
  int hand_w = 0, hand_h = 0, obj_w = 0, obj_h = 0;
  PixRect object;
};

SidePlan plan_side(const Layout& L, int side, Rng& rng) {
  SidePlan p;
  p.hand_w = irand(rng, L.hand_w_lo, L.hand_w_hi);
  p.hand_h = irand(rng, L.hand_h_lo, L.hand_h_hi);
  p.obj_w = irand(rng, L.obj_min, std::max(L.obj_min, p.hand_w - 1));
  p.obj_h = irand(rng, L.obj_min, std::max(L.obj_min, p.hand_h - 1));
  const int lo = L.side_lo(side);
  const int ox = irand(rng, lo + 1, lo + L.half - p.obj_w - 1);
  const int oy = irand(rng, L.obj_y_lo, L.obj_y_hi);
  p.object = rect(ox, oy, p.obj_w, p.obj_h);
  return p;
}

// Hand x position that covers the object's full width while staying in its
// half of the image.
int covering_hand_x(const Layout& L, int side, const SidePlan& p, Rng& rng) {
  const int lo = std::max(L.side_lo(side), p.object.x2 - p.hand_w);
  const int hi = std::min(p.object.x1, L.side_lo(side) + L.half - p.hand_w);
  return irand(rng, lo, std::max(lo, hi));
}

Haog measure(const std::array<std::optional<PixRect>, 4>& rects, int size, double threshold) {
  Haog h;
  for (std::size_t j = 0; j < kHaogNodes; ++j) {
    h.exists[j] = rects[j].has_value();
    if (rects[j]) h.boxes[j] = rects[j]->normalized(size);
  }
  for (std::size_t k = 0; k < kHaogEdges; ++k)
    h.contact[k] = h.contact_defined(k) && overlap_fraction(*h.boxes[k], *h.boxes[k + 2]) >= threshold;
  return h;
}

}  // namespace

std::array<double, 3> Palette::hand(std::size_t side) {
  return side == 0 ? std::array{quantize(0.90), quantize(0.65), quantize(0.50)}
                   : std::array{quantize(0.70), quantize(0.40), quantize(0.25)};
}

std::array<double, 3> Palette::object(std::size_t side, bool changed) {
  if (!changed)
    return side == 0 ? std::array{quantize(0.15), quantize(0.70), quantize(0.20)}
                     : std::array{quantize(0.20), quantize(0.30), quantize(0.85)};
  return side == 0 ? std::array{quantize(0.85), quantize(0.15), quantize(0.15)}
                   : std::array{quantize(0.85), quantize(0.20), quantize(0.75)};
}

double overlap_fraction(const BoundingBox& hand, const BoundingBox& object) {
  const double area = object.area();
  if (area <= 0) return 0.0;
  const double w = std::min(hand.x2, object.x2) - std::max(hand.x1, object.x1);
  const double h = std::min(hand.y2, object.y2) - std::max(hand.y1, object.y1);
  return (w > 0 && h > 0) ? (w * h) / area : 0.0;
}

SceneImage gen_scene(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int S = static_cast<int>(cfg.image_size);
  const Layout L(S);
  Rng rng(derive_seed(seed, 0x5CE4E));

  SceneImage out;
  out.pixels = Frames(1, cfg.image_size, cfg.image_size);
  fill_background(out.pixels, rng);

  std::array<std::optional<PixRect>, 4> rects;
  std::array<bool, 2> changed{};
  for (int side = 0; side < 2; ++side) {
    const bool has_hand = rng.bernoulli(cfg.hand_prob);
    const bool has_obj = rng.bernoulli(cfg.object_prob);
    const SidePlan p = plan_side(L, side, rng);
    changed[static_cast<std::size_t>(side)] = rng.bernoulli(0.5);
    const bool touching = rng.bernoulli(0.5);
    const int overlap_rows = irand(rng, 1, std::max(1, p.obj_h - 1));
    const int gap = irand(rng, 0, std::max(0, S / 10));
    const int jitter = irand(rng, -1, 1);
    const int free_y = irand(rng, 3 * S / 8, S - p.hand_h);
    const int free_x = irand(rng, L.side_lo(side), L.side_lo(side) + L.half - p.hand_w);

    if (has_obj) rects[static_cast<std::size_t>(side) + 2] = p.object;
    if (!has_hand) continue;
    int hx = free_x, hy = free_y;
    if (has_obj) {
      hx = p.object.x1 + p.obj_w / 2 - p.hand_w / 2 + jitter;
      hx = std::clamp(hx, L.side_lo(side), L.side_lo(side) + L.half - p.hand_w);
      hy = touching ? p.object.y2 - overlap_rows : p.object.y2 + gap;
      hy = std::min(hy, S - p.hand_h);
    }
    rects[static_cast<std::size_t>(side)] = rect(hx, hy, p.hand_w, p.hand_h);
  }

  for (std::size_t side = 0; side < 2; ++side)
    if (rects[side]) paint(out.pixels, 0, *rects[side], Palette::hand(side));
  for (std::size_t side = 0; side < 2; ++side)
    if (rects[side + 2]) paint(out.pixels, 0, *rects[side + 2], Palette::object(side, changed[side]));

  out.haog = measure(rects, S, cfg.contact_threshold);
  return out;
}

VideoClipSample gen_clip(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int S = static_cast<int>(cfg.image_size);
  const int F = static_cast<int>(cfg.raw_frames);
  const Layout L(S);
  Rng rng(derive_seed(seed, 0xC11B));

  VideoClipSample clip;
  clip.fps = cfg.fps;
  clip.frames = Frames(cfg.raw_frames, cfg.image_size, cfg.image_size);
  fill_background(clip.frames, rng);

  const bool change = !rng.bernoulli(cfg.no_change_prob);
  const int active = static_cast<int>(rng.integer(0, 1));
  const auto grid = sample_frames(0, cfg.raw_frames - 1, cfg.grid_frames);
  const std::size_t last_slot = grid.size() >= 3 ? grid.size() - 2 : grid.size() - 1;
  const int pnr = static_cast<int>(grid[static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(last_slot)))]);

  struct Motion {
    SidePlan plan;
    int hand_x = 0;
    int contact_y = 0;  // hand top at first contact
    int speed = 1;
    int approach = 0;   // frames spent moving before contact
    int hover_y = 0;
    int hover_amp = 0;
  };
  std::array<Motion, 2> sides;
  for (int side = 0; side < 2; ++side) {
    Motion& m = sides[static_cast<std::size_t>(side)];
    m.plan = plan_side(L, side, rng);
    m.hand_x = covering_hand_x(L, side, m.plan, rng);
    const int obj_h = m.plan.obj_h;
    const int rows = std::clamp(static_cast<int>(std::ceil(cfg.contact_threshold * obj_h - 1e-9)), 1,
                                std::max(1, obj_h - 1));
    m.contact_y = m.plan.object.y2 - rows;
    const int room = S - m.plan.hand_h - m.contact_y;
    m.speed = std::clamp(irand(rng, static_cast<int>(cfg.speed_min), static_cast<int>(cfg.speed_max)), rows,
                         std::max(rows, room));
    m.approach = std::max(1, std::min(pnr, room / m.speed));
    m.hover_y = m.plan.object.y2 + 1;
    m.hover_amp = std::clamp(S - m.plan.hand_h - m.hover_y, 0, 3);
  }

  clip.osc_label = change;
  clip.pnr_index = change ? static_cast<std::size_t>(pnr) : cfg.raw_frames - 1;
  clip.frame_haogs.reserve(cfg.raw_frames);

  for (int t = 0; t < F; ++t) {
    std::array<std::optional<PixRect>, 4> rects;
    std::array<bool, 2> changed{};
    for (int side = 0; side < 2; ++side) {
      const Motion& m = sides[static_cast<std::size_t>(side)];
      int hy;
      if (change && side == active) {
        hy = m.contact_y + m.speed * std::min(m.approach, std::max(0, pnr - t));
        changed[static_cast<std::size_t>(side)] = t >= pnr;
      } else {
        // Triangle wave that never reaches the object.
        const int period = std::max(1, 2 * m.hover_amp);
        const int phase = (t / 3) % period;
        hy = m.hover_y + (phase <= m.hover_amp ? phase : period - phase);
      }
      rects[static_cast<std::size_t>(side)] = rect(m.hand_x, hy, m.plan.hand_w, m.plan.hand_h);
      rects[static_cast<std::size_t>(side) + 2] = m.plan.object;
    }
    const auto tt = static_cast<std::size_t>(t);
    for (std::size_t side = 0; side < 2; ++side) paint(clip.frames, tt, *rects[side], Palette::hand(side));
    for (std::size_t side = 0; side < 2; ++side)
      paint(clip.frames, tt, *rects[side + 2], Palette::object(side, changed[side]));
    clip.frame_haogs.push_back(measure(rects, S, cfg.contact_threshold));
  }
  return clip;
}

std::vector<std::size_t> sample_frames(std::size_t first, std::size_t last, std::size_t count) {
  if (last < first) throw ArgumentError("sample_frames: last < first");
  if (count < 2) throw ArgumentError("sample_frames: need at least 2 frames");
  std::vector<std::size_t> out(count);
  const std::size_t span = last - first;
  const std::size_t den = count - 1;
  for (std::size_t k = 0; k < count; ++k) out[k] = first + (2 * k * span + den) / (2 * den);
  return out;
}

std::pair<std::size_t, std::size_t> training_window(std::size_t raw_frames, std::size_t jitter, std::uint64_t seed) {
  if (raw_frames == 0) throw ArgumentError("training_window: empty clip");
  const std::size_t j = std::min(jitter, (raw_frames - 1) / 2);
  Rng rng(derive_seed(seed, 0x3A3F));
  const auto first = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(j)));
  const auto last = raw_frames - 1 - static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(j)));
  return {first, last};
}

std::size_t nearest_sample(const std::vector<std::size_t>& sampled, std::size_t raw) {
  if (sampled.empty()) throw ArgumentError("nearest_sample: no samples");
  std::size_t best = 0;
  std::size_t best_dist = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const std::size_t d = sampled[i] > raw ? sampled[i] - raw : raw - sampled[i];
    if (d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

std::size_t first_sample_at_or_after(const std::vector<std::size_t>& sampled, std::size_t raw) {
  if (sampled.empty()) throw ArgumentError("first_sample_at_or_after: no samples");
  for (std::size_t i = 0; i < sampled.size(); ++i)
    if (sampled[i] >= raw) return i;
  return nearest_sample(sampled, raw);
}

Frames resize_bilinear(const Frames& in, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ArgumentError("resize_bilinear: empty target");
  if (height == in.height && width == in.width) return in;
  Frames out(in.count, height, width);
  const double sy = static_cast<double>(in.height) / static_cast<double>(height);
  const double sx = static_cast<double>(in.width) / static_cast<double>(width);
  auto coord = [](std::size_t dst, double scale, std::size_t n, std::size_t& i0, std::size_t& i1, double& w) {
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    w = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double wy;
    coord(y, sy, in.height, y0, y1, wy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double wx;
      coord(x, sx, in.width, x0, x1, wx);
      for (std::size_t f = 0; f < in.count; ++f)
        for (std::size_t c = 0; c < 3; ++c) {
          const double top = (1 - wx) * in.at(f, y0, x0, c) + wx * in.at(f, y0, x1, c);
          const double bot = (1 - wx) * in.at(f, y1, x0, c) + wx * in.at(f, y1, x1, c);
          out.at(f, y, x, c) = (1 - wy) * top + wy * bot;
        }
    }
  }
  return out;
}

Frames resize_crop(const Frames& frames, std::size_t crop_size, ScaleRange scales, std::uint64_t seed,
                   bool train_mode, CropAnchor anchor) {
  if (scales.min == 0 || scales.min > scales.max) throw ArgumentError("resize_crop: invalid scale range");
  if (frames.height == 0 || frames.width == 0) throw ArgumentError("resize_crop: empty frames");
  Rng rng(derive_seed(seed, 0xC409));
  const std::size_t scale = train_mode ? static_cast<std::size_t>(rng.integer(scales.min, scales.max))
                                       : (static_cast<std::size_t>(scales.min) + scales.max) / 2;
  std::size_t h, w;
  if (frames.height <= frames.width) {
    h = scale;
    w = static_cast<std::size_t>(std::lround(static_cast<double>(frames.width) * scale / frames.height));
  } else {
    w = scale;
    h = static_cast<std::size_t>(std::lround(static_cast<double>(frames.height) * scale / frames.width));
  }
  if (crop_size == 0 || crop_size > h || crop_size > w)
    throw ArgumentError("resize_crop: crop " + std::to_string(crop_size) + " larger than scaled image " +
                        std::to_string(h) + "x" + std::to_string(w));
  const Frames scaled = resize_bilinear(frames, h, w);

  std::size_t top, left;
  if (train_mode) {
    top = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(h - crop_size)));
    left = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(w - crop_size)));
  } else {
    top = (h - crop_size) / 2;
    switch (anchor) {
      case CropAnchor::kLeft: left = 0; break;
      case CropAnchor::kRight: left = w - crop_size; break;
      default: left = (w - crop_size) / 2; break;
    }
  }
  if (top == 0 && left == 0 && crop_size == h && crop_size == w) return scaled;

  Frames out(frames.count, crop_size, crop_size);
  for (std::size_t f = 0; f < frames.count; ++f)
    for (std::size_t y = 0; y < crop_size; ++y)
      for (std::size_t x = 0; x < crop_size; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(f, y, x, c) = scaled.at(f, top + y, left + x, c);
  return out;
}

}  // namespace svit
