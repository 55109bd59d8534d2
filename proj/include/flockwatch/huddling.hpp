#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "flockwatch/error.hpp"
#include "flockwatch/spatial_index.hpp"

namespace flockwatch {

struct HuddleConfig {
  double radius = 100.0;
  std::size_t count_threshold = 10;

  void validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("radius must be positive");
    if (count_threshold < 1) throw InvalidArgument("count_threshold must be at least 1");
  }
};

struct HuddleVerdict {
  std::uint64_t frame_index = 0;
  bool is_huddling = false;
  // Neighbours within the radius, the bird itself included.
  std::map<std::uint64_t, std::size_t> per_bird_counts;
  std::set<std::uint64_t> involved;
  std::size_t max_count = 0;
};

namespace detail {

template <typename Counter>
HuddleVerdict tally(std::span<const TaggedPoint> birds, const HuddleConfig& config,
                    std::uint64_t frame_index, Counter&& counter) {
  HuddleVerdict v;
  v.frame_index = frame_index;
  for (const auto& b : birds) {
    const std::size_t n = counter(b.point);
    // Repeated tags keep the largest neighbourhood.
    auto& slot = v.per_bird_counts[b.tag];
    slot = std::max(slot, n);
    v.max_count = std::max(v.max_count, n);
    if (n > config.count_threshold) v.involved.insert(b.tag);
  }
  v.is_huddling = !v.involved.empty();
  return v;
}

}  // namespace detail

// A frame is huddling when some bird has strictly more than count_threshold
// birds (itself included) within radius.
inline HuddleVerdict classify_frame(std::span<const TaggedPoint> centroids,
                                    const HuddleConfig& config = {},
                                    std::uint64_t frame_index = 0) {
  config.validate();
  const SpatialIndex index(centroids);
  return detail::tally(centroids, config, frame_index, [&](const Point2D& p) {
    return index.count_within_radius(p, config.radius);
  });
}

// Same verdict computed by linear scan; used to cross-check the tree and to
// label synthetic ground truth.
inline HuddleVerdict classify_frame_brute_force(std::span<const TaggedPoint> centroids,
                                                const HuddleConfig& config = {},
                                                std::uint64_t frame_index = 0) {
  config.validate();
  for (const auto& c : centroids) validate(c.point);
  return detail::tally(centroids, config, frame_index, [&](const Point2D& p) {
    return brute_force_count(centroids, p, config.radius);
  });
}

}  // namespace flockwatch
