#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flockwatch/error.hpp"

namespace flockwatch {

struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

// Axis-aligned box stored as corner plus extent, in pixels.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double width = 0.0;
  double height = 0.0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct TrackId {
  std::uint64_t value = 0;

  friend auto operator<=>(const TrackId&, const TrackId&) = default;
};

struct Detection {
  std::uint64_t frame_index = 0;
  BoundingBox bbox;
  double confidence = 1.0;
  std::string class_label = "chicken";

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct FrameDetections {
  std::uint64_t frame_index = 0;
  std::vector<Detection> detections;

  friend bool operator==(const FrameDetections&, const FrameDetections&) = default;
};

inline bool is_finite(const Point2D& p) noexcept {
  return std::isfinite(p.x) && std::isfinite(p.y);
}

inline bool is_valid(const BoundingBox& b) noexcept {
  return std::isfinite(b.x_min) && std::isfinite(b.y_min) && std::isfinite(b.width) &&
         std::isfinite(b.height) && b.width > 0.0 && b.height > 0.0;
}

inline void validate(const Point2D& p) {
  if (!is_finite(p)) throw InvalidArgument("point has a non-finite coordinate");
}

inline void validate(const BoundingBox& b) {
  if (!std::isfinite(b.x_min) || !std::isfinite(b.y_min) || !std::isfinite(b.width) ||
      !std::isfinite(b.height))
    throw InvalidArgument("bounding box has a non-finite field");
  if (b.width <= 0.0 || b.height <= 0.0)
    throw InvalidArgument("degenerate bounding box (width and height must be positive)");
}

inline void validate(const Detection& d) {
  validate(d.bbox);
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
    throw InvalidArgument("detection confidence outside [0, 1]");
}

inline void validate(const FrameDetections& f) {
  for (const auto& d : f.detections) {
    if (d.frame_index != f.frame_index)
      throw InvalidArgument("detection frame_index differs from its frame");
    validate(d);
  }
}

inline Point2D centroid(const BoundingBox& b) {
  validate(b);
  return {b.x_min + 0.5 * b.width, b.y_min + 0.5 * b.height};
}

inline double euclidean_distance(const Point2D& p, const Point2D& q) {
  validate(p);
  validate(q);
  const double dx = p.x - q.x;
  const double dy = p.y - q.y;
  return std::sqrt(dx * dx + dy * dy);
}

// Intersection over union; 0 for disjoint or edge-touching boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  validate(a);
  validate(b);
  if (a == b) return 1.0;
  const double ix = std::min(a.x_min + a.width, b.x_min + b.width) - std::max(a.x_min, b.x_min);
  const double iy =
      std::min(a.y_min + a.height, b.y_min + b.height) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.width * a.height + b.width * b.height - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace flockwatch
