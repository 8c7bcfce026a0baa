#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stmg/tensor.hpp"

namespace stmg {

/// Row-major boolean mask; nonzero means "entry participates".
using Mask = std::vector<std::uint8_t>;

inline constexpr double kDefaultLeakySlope = 0.2;

/// Pixel grid. Cell (col, row) covers [col, col+1) x [row, row+1); its
/// position is the cell center (col + 0.5, row + 0.5).
struct GridSpec {
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t cells() const { return width * height; }
  bool operator==(const GridSpec&) const = default;
};

using Vec2 = std::array<double, 2>;
/// Row-major 2x2 matrix {m00, m01, m10, m11}.
using Mat2 = std::array<double, 4>;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor leaky_relu(const Tensor& x, double slope = kDefaultLeakySlope);
double leaky_relu(double x, double slope = kDefaultLeakySlope);

/// Row-wise softmax over the unmasked entries; masked entries are exactly 0.
/// Throws DegenerateError if a row has no unmasked entry.
Tensor masked_softmax(const Tensor& logits, const Mask& mask);

/// Unnormalized Gaussian exp(-1/2 (x-mu)^T sigma^-1 (x-mu)) sampled at every
/// cell center of `grid`. Result has shape {height, width}; peak value 1 at mu.
Tensor gaussian2d(const Vec2& mu, const Mat2& sigma, const GridSpec& grid);

/// Same density evaluated at one continuous point.
double gaussian2d_at(const Vec2& mu, const Mat2& sigma, const Vec2& x);

}  // namespace stmg
