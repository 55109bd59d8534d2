#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flockwatch/error.hpp"
#include "flockwatch/geometry.hpp"

namespace flockwatch {

struct TaggedPoint {
  Point2D point;
  std::uint64_t tag = 0;

  friend bool operator==(const TaggedPoint&, const TaggedPoint&) = default;
};

namespace detail {

inline void check_radius(double radius) {
  if (std::isnan(radius) || radius < 0.0) throw InvalidArgument("radius must be non-negative");
}

// The single inclusion rule shared by the tree and the linear scan.
inline bool within(const Point2D& p, const Point2D& center, double radius) {
  return euclidean_distance(p, center) <= radius;
}

}  // namespace detail

// Linear-scan radius count, boundary inclusive.
inline std::size_t brute_force_count(std::span<const Point2D> points, Point2D center,
                                     double radius) {
  detail::check_radius(radius);
  validate(center);
  std::size_t n = 0;
  for (const auto& p : points)
    if (detail::within(p, center, radius)) ++n;
  return n;
}

inline std::size_t brute_force_count(std::span<const TaggedPoint> points, Point2D center,
                                     double radius) {
  detail::check_radius(radius);
  validate(center);
  std::size_t n = 0;
  for (const auto& p : points)
    if (detail::within(p.point, center, radius)) ++n;
  return n;
}

// Immutable balanced 2-D kd-tree.
//
// The tree is implicit: points are permuted in place so that for every
// subrange [lo, hi) the median element sits at mid = lo + (hi - lo) / 2, with
// elements in [lo, mid) not greater and elements in (mid, hi) not less than it
// on the split axis. Depth d splits on x when d is even, y when odd.
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(std::vector<TaggedPoint> points) : nodes_(std::move(points)) {
    for (const auto& p : nodes_)
      if (!is_finite(p.point)) throw InvalidArgument("index point has a non-finite coordinate");
    build(0, nodes_.size(), 0);
  }

  explicit SpatialIndex(std::span<const TaggedPoint> points)
      : SpatialIndex(std::vector<TaggedPoint>(points.begin(), points.end())) {}

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

  // Indexed points in tree order (a permutation of the input multiset).
  std::span<const TaggedPoint> points() const noexcept { return nodes_; }

  std::size_t count_within_radius(Point2D center, double radius) const {
    detail::check_radius(radius);
    validate(center);
    return count(0, nodes_.size(), 0, center, radius);
  }

 private:
  static double coord(const Point2D& p, unsigned axis) { return axis == 0 ? p.x : p.y; }

  void build(std::size_t lo, std::size_t hi, unsigned depth) {
    if (hi - lo <= 1) return;
    const unsigned axis = depth & 1u;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(nodes_.begin() + static_cast<std::ptrdiff_t>(lo),
                     nodes_.begin() + static_cast<std::ptrdiff_t>(mid),
                     nodes_.begin() + static_cast<std::ptrdiff_t>(hi),
                     [axis](const TaggedPoint& a, const TaggedPoint& b) {
                       return coord(a.point, axis) < coord(b.point, axis);
                     });
    build(lo, mid, depth + 1);
    build(mid + 1, hi, depth + 1);
  }

  // Pruning compares the rounded axis gap with the radius. Rounding is
  // monotone, so a point beyond the split plane is at least as far along the
  // axis as the plane itself and the full distance is never smaller.
  std::size_t count(std::size_t lo, std::size_t hi, unsigned depth, const Point2D& c,
                    double r) const {
    std::size_t n = 0;
    while (hi > lo) {
      const std::size_t mid = lo + (hi - lo) / 2;
      const auto& node = nodes_[mid].point;
      if (detail::within(node, c, r)) ++n;
      if (hi - lo == 1) break;
      const unsigned axis = depth & 1u;
      const double split = coord(node, axis);
      const double q = coord(c, axis);
      const bool visit_low = !(q - split > r);
      const bool visit_high = !(split - q > r);
      if (visit_low && visit_high) {
        n += count(mid + 1, hi, depth + 1, c, r);
        hi = mid;
      } else if (visit_low) {
        hi = mid;
      } else if (visit_high) {
        lo = mid + 1;
      } else {
        break;
      }
      ++depth;
    }
    return n;
  }

  std::vector<TaggedPoint> nodes_;
};

inline SpatialIndex index_build(std::vector<TaggedPoint> points) {
  return SpatialIndex(std::move(points));
}

}  // namespace flockwatch
