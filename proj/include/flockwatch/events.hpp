#pragma once

#include <cstdint>
#include <string_view>
#include <tuple>
#include <vector>

#include "flockwatch/geometry.hpp"

namespace flockwatch {

enum class EventKind { huddling, inactivity };

inline std::string_view to_string(EventKind k) noexcept {
  return k == EventKind::huddling ? "huddling" : "inactivity";
}

// One reported abnormality. For huddling, value is the largest neighbour count
// seen over the span and track_ids the birds that exceeded the threshold; for
// inactivity, value is the lowest window activity level and track_ids holds
// exactly one id.
struct AnomalyEvent {
  EventKind kind = EventKind::huddling;
  std::uint64_t frame_start = 0;
  std::uint64_t frame_end = 0;
  std::vector<TrackId> track_ids;  // ascending
  double value = 0.0;

  friend bool operator==(const AnomalyEvent&, const AnomalyEvent&) = default;
};

// Output order: frame_start, then kind, then track ids.
inline bool event_order(const AnomalyEvent& a, const AnomalyEvent& b) {
  return std::tie(a.frame_start, a.kind, a.track_ids, a.frame_end) <
         std::tie(b.frame_start, b.kind, b.track_ids, b.frame_end);
}

}  // namespace flockwatch
