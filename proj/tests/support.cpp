#include "support.hpp"

#include <algorithm>
#include <cmath>

#include "svit/rng.hpp"
#include "svit/tensor_io.hpp"

namespace svit::testing {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

namespace {

double eval(const ScalarFn& fn, const std::vector<Matrix>& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.constant(m));
  return fn(tape, vars).item();
}

}  // namespace

double op_gradcheck(const ScalarFn& fn, const std::vector<Matrix>& inputs, double eps) {
  std::vector<Matrix> grads;
  for (const auto& m : inputs) grads.emplace_back(m.rows, m.cols);
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.leaf(inputs[i], &grads[i]));
    tape.backward(fn(tape, vars));
  }
  double worst = 0.0;
  std::vector<Matrix> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t k = 0; k < inputs[i].data.size(); ++k) {
      const double x = inputs[i].data[k];
      probe[i].data[k] = x + eps;
      const double up = eval(fn, probe);
      probe[i].data[k] = x - eps;
      const double down = eval(fn, probe);
      probe[i].data[k] = x;
      const double numeric = (up - down) / (2 * eps);
      const double a = grads[i].data[k];
      worst = std::max(worst, std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric)));
    }
  return worst;
}

double raster_giou(const BoundingBox& a, const BoundingBox& b, std::size_t grid, Raster mode) {
  const BoundingBox hull{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
  const double cell = 1.0 / static_cast<double>(grid);
  auto span = [&](double lo, double hi, std::size_t k) {
    const double c0 = static_cast<double>(k) * cell;
    if (mode == Raster::kCellCentre) {
      const double mid = c0 + 0.5 * cell;
      return (mid >= lo && mid < hi) ? 1.0 : 0.0;
    }
    return std::max(0.0, std::min(hi, c0 + cell) - std::max(lo, c0)) / cell;
  };
  std::vector<double> ax(grid), ay(grid), bx(grid), by(grid), hx(grid), hy(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    ax[k] = span(a.x1, a.x2, k);
    ay[k] = span(a.y1, a.y2, k);
    bx[k] = span(b.x1, b.x2, k);
    by[k] = span(b.y1, b.y2, k);
    hx[k] = span(hull.x1, hull.x2, k);
    hy[k] = span(hull.y1, hull.y2, k);
  }
  double area_a = 0, area_b = 0, inter = 0, area_hull = 0;
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      const double ca = ax[j] * ay[i], cb = bx[j] * by[i];
      area_a += ca;
      area_b += cb;
      inter += std::min(ca, cb);
      area_hull += hx[j] * hy[i];
    }
  if (area_hull <= 0) return 0.0;
  const double uni = area_a + area_b - inter;
  const double iou = uni > 0 ? inter / uni : 0.0;
  return iou - (area_hull - uni) / area_hull;
}

BoundingBox random_box(Rng& rng, double min_side) {
  auto side = [&](double& lo, double& hi) {
    const double len = rng.uniform(min_side, 1.0);
    lo = rng.uniform(0.0, 1.0 - len);
    hi = lo + len;
  };
  BoundingBox b;
  side(b.x1, b.x2);
  side(b.y1, b.y2);
  return b;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("svit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::pair<std::string, std::string>> tree_contents(const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.emplace_back(std::filesystem::relative(e.path(), root).string(), read_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace svit::testing
