#include "fastface/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fastface/errors.hpp"

namespace fastface {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw ConfigError("matrix payload has " + std::to_string(data.size()) +
                      " values, expected " + std::to_string(r * c));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ConfigError("matmul inner dimension mismatch: " + std::to_string(a.cols) +
                      " vs " + std::to_string(b.rows));
  }
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) {
    throw ConfigError("matmul_transposed inner dimension mismatch: " +
                      std::to_string(a.cols) + " vs " + std::to_string(b.cols));
  }
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " +
                         std::to_string(i));
    }
  }
}

Matrix softmax_rows(const Matrix& m, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("softmax_rows: scale must be a positive finite number");
  }
  require_finite(m.data, "softmax_rows input");
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto in = m.row(r);
    auto dst = out.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(scale * (in[c] - peak));
      total += dst[c];
    }
    for (double& x : dst) x /= total;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> minmax_norm(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (range <= kEpsilonGuard) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  return out;
}

double quantile(std::span<const double> v, double p) {
  if (v.empty()) throw ConfigError("quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile: p must lie in [0, 1]");
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

MapStats mean_std(std::span<const double> v) {
  if (v.empty()) throw ConfigError("mean_std: empty input");
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

std::vector<double> adain(const MapStats& source, std::span<const double> x) {
  const MapStats own = mean_std(x);
  std::vector<double> out(x.size(), source.mean);
  if (own.std <= kEpsilonGuard) return out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = source.std * (x[i] - own.mean) / own.std + source.mean;
  }
  return out;
}

}  // namespace fastface
