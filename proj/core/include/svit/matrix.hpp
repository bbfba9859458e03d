#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace svit {

/// Dense row-major matrix of doubles. Every tensor in the model is viewed as
/// a (rows x cols) matrix; vectors are 1 x n, scalars 1 x 1.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix column(std::span<const double> values);
  static Matrix row(std::span<const double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row_span(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row_span(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

namespace kernels {

// out (m x n) += a (m x k) * b (k x n)
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);
// out (m x n) += a (m x k) * b^T, b is (n x k)
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out (k x n) += a^T * b, a is (m x k), b is (m x n)
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out);

}  // namespace kernels

}  // namespace svit
