#include "svit/matrix.hpp"

#include <cmath>

namespace svit {

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = values[i];
  return m;
}

Matrix Matrix::row(std::span<const double> values) {
  Matrix m(1, values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = values[i];
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace kernels {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data.data() + i * n;
    const double* ar = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.data.data() + i * k;
    double* o = out.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b.data.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      o[j] += acc;
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.data.data() + i * k;
    const double* br = b.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* o = out.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

}  // namespace kernels
}  // namespace svit
