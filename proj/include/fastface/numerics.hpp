#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fastface {

// Guard added to every division by a standard deviation or a range.
inline constexpr double kEpsilonGuard = 1e-8;

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Population moments of a map.
struct MapStats {
  double mean = 0.0;
  double std = 0.0;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transposed(const Matrix& a, const Matrix& b);  // a * b^T

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, const char* what);

// Row-wise softmax of `scale * m`. Rows sum to one.
Matrix softmax_rows(const Matrix& m, double scale);

double sigmoid(double x);

// Min-max normalization over all entries. A range at or below the epsilon
// guard yields all zeros.
std::vector<double> minmax_norm(std::span<const double> v);

// Linear interpolation between order statistics: position p * (n - 1).
double quantile(std::span<const double> v, double p);

MapStats mean_std(std::span<const double> v);

// Re-imposes `source` moments on x: source.std * (x - mean_x) / std_x + source.mean.
// When std_x is within the epsilon guard the result is the constant source.mean.
std::vector<double> adain(const MapStats& source, std::span<const double> x);

}  // namespace fastface
