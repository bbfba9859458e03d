#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <filesystem>
#include <string>

#include "svit/autodiff.hpp"
#include "svit/haog.hpp"
#include "svit/matrix.hpp"
#include "svit/rng.hpp"

namespace svit::testing {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

using ScalarFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Largest relative error between the tape gradient of `fn` and central
/// differences, over every entry of every input.
double op_gradcheck(const ScalarFn& fn, const std::vector<Matrix>& inputs, double eps = 1e-6);

enum class Raster {
  kCellCentre,  // binary occupancy, a cell is in when its centre is
  kCoverage,    // each cell holds the covered fraction of its area
};

/// GIoU measured on a grid x grid occupancy raster, without the closed form.
/// Cell-centre occupancy moves every edge by up to one cell; coverage
/// occupancy is exact for single boxes and only approximates the overlap
/// (min of the two coverages) in cells where both boxes have an edge.
double raster_giou(const BoundingBox& a, const BoundingBox& b, std::size_t grid = 512,
                   Raster mode = Raster::kCoverage);

/// Box with both sides at least min_side, inside the unit square.
BoundingBox random_box(Rng& rng, double min_side = 0.0);

/// Empty directory under the system temp dir, unique per name; removed first
/// when it already exists.
std::filesystem::path scratch_dir(const std::string& name);

/// Every regular file under root, relative path -> contents.
std::vector<std::pair<std::string, std::string>> tree_contents(const std::filesystem::path& root);

}  // namespace svit::testing
