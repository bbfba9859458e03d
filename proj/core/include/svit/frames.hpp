#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace svit {

/// A stack of RGB frames, layout count x height x width x 3, row-major.
/// A still image is a stack of one.
struct Frames {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Frames() = default;
  Frames(std::size_t f, std::size_t h, std::size_t w, double fill = 0.0)
      : count(f), height(h), width(w), pixels(f * h * w * 3, fill) {}

  std::size_t frame_stride() const { return height * width * 3; }
  std::size_t index(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return ((f * height + y) * width + x) * 3 + c;
  }
  double& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) { return pixels[index(f, y, x, c)]; }
  double at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const { return pixels[index(f, y, x, c)]; }

  Frames frame(std::size_t f) const;
  /// Gathers the listed frames, in order, into a new stack.
  Frames select(std::span<const std::size_t> indices) const;

  friend bool operator==(const Frames&, const Frames&) = default;
};

}  // namespace svit
