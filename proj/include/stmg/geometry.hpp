#pragma once

#include <algorithm>

#include "stmg/numerics.hpp"

namespace stmg {

/// Axis-aligned box in pixels, covering [x, x+w) x [y, y+h).
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  Vec2 center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }
  /// True if the cell (col, row) has its center inside the box.
  bool contains_cell(std::size_t col, std::size_t row) const {
    const double cx = static_cast<double>(col) + 0.5, cy = static_cast<double>(row) + 0.5;
    return cx >= x && cx < x + w && cy >= y && cy < y + h;
  }
  bool operator==(const BoundingBox&) const = default;
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return iw > 0.0 && ih > 0.0 ? iw * ih : 0.0;
}

}  // namespace stmg
