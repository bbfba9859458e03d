#include "svit/frames.hpp"

#include <algorithm>

#include "svit/errors.hpp"

namespace svit {

Frames Frames::frame(std::size_t f) const {
  const std::size_t idx[1] = {f};
  return select(idx);
}

Frames Frames::select(std::span<const std::size_t> indices) const {
  Frames out(indices.size(), height, width);
  const std::size_t stride = frame_stride();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= count) throw ArgumentError("frame index out of range");
    const auto src = pixels.begin() + static_cast<std::ptrdiff_t>(indices[i] * stride);
    std::copy(src, src + static_cast<std::ptrdiff_t>(stride),
              out.pixels.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

}  // namespace svit
