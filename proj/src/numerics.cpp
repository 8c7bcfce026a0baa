#include "stmg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stmg/error.hpp"

namespace stmg {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({n, m});
  const double* pa = a.storage().data();
  const double* pb = b.storage().data();
  double* po = out.storage().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = x;
  for (double& v : out.storage()) v = leaky_relu(v, slope);
  return out;
}

Tensor masked_softmax(const Tensor& logits, const Mask& mask) {
  const std::size_t n = logits.rows(), m = logits.cols();
  if (mask.size() != n * m) throw DimensionError("masked_softmax mask size mismatch");
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t active = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!mask[i * m + j]) continue;
      const double v = logits.at(i, j);
      mx = std::isnan(v) || std::isnan(mx) ? std::numeric_limits<double>::quiet_NaN() : std::max(mx, v);
      ++active;
    }
    if (active == 0) {
      throw DegenerateError("masked_softmax: row " + std::to_string(i) + " has an empty neighborhood");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask[i * m + j]) {
        const double e = std::exp(logits.at(i, j) - mx);
        out.at(i, j) = e;
        z += e;
      }
    }
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  return out;
}

namespace {

Mat2 inverse_spd(const Mat2& s) {
  if (std::abs(s[1] - s[2]) > 1e-12 * std::max(1.0, std::abs(s[1]))) {
    throw DegenerateError("covariance is not symmetric");
  }
  const double det = s[0] * s[3] - s[1] * s[2];
  if (!(s[0] > 0.0) || !(det > 0.0) || !std::isfinite(det)) {
    throw DegenerateError("covariance is not positive definite");
  }
  return {s[3] / det, -s[1] / det, -s[2] / det, s[0] / det};
}

double mahalanobis_sq(const Mat2& inv, double dx, double dy) {
  return dx * (inv[0] * dx + inv[1] * dy) + dy * (inv[2] * dx + inv[3] * dy);
}

}  // namespace

double gaussian2d_at(const Vec2& mu, const Mat2& sigma, const Vec2& x) {
  const Mat2 inv = inverse_spd(sigma);
  return std::exp(-0.5 * mahalanobis_sq(inv, x[0] - mu[0], x[1] - mu[1]));
}

Tensor gaussian2d(const Vec2& mu, const Mat2& sigma, const GridSpec& grid) {
  const Mat2 inv = inverse_spd(sigma);
  Tensor out({grid.height, grid.width});
  for (std::size_t r = 0; r < grid.height; ++r) {
    const double dy = static_cast<double>(r) + 0.5 - mu[1];
    for (std::size_t c = 0; c < grid.width; ++c) {
      const double dx = static_cast<double>(c) + 0.5 - mu[0];
      out.at(r, c) = std::exp(-0.5 * mahalanobis_sq(inv, dx, dy));
    }
  }
  return out;
}

}  // namespace stmg
