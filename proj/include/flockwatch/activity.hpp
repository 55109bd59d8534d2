#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flockwatch/error.hpp"
#include "flockwatch/events.hpp"
#include "flockwatch/geometry.hpp"
#include "flockwatch/tracker.hpp"

namespace flockwatch {

struct ActivityConfig {
  std::size_t window_frames = 50;   // T, the number of displacement terms
  double activity_threshold = 20.0;  // pixels

  void validate() const {
    if (window_frames < 1) throw InvalidArgument("window_frames must be at least 1");
    if (!(activity_threshold > 0.0) || !std::isfinite(activity_threshold))
      throw InvalidArgument("activity_threshold must be positive");
  }
};

// Activity of one track over its trailing window at some frame.
struct WindowActivity {
  TrackId track_id;
  std::uint64_t window_start_frame = 0;
  std::uint64_t window_end_frame = 0;
  double activity_level = 0.0;
};

using InactivityEvent = WindowActivity;

// Centroid displacement between history positions i - 1 and i.
inline double displacement(const Track& track, std::size_t i) {
  if (i == 0 || i >= track.history.size())
    throw InvalidArgument("displacement position " + std::to_string(i) +
                          " outside history of length " + std::to_string(track.history.size()));
  return euclidean_distance(track.history[i].centroid, track.history[i - 1].centroid);
}

// Sum of the window_frames displacements internal to the history entries
// [start, start + window_frames].
inline double activity_level(const Track& track, std::size_t start, std::size_t window_frames) {
  if (window_frames < 1) throw InvalidArgument("window must be at least one frame");
  if (start + window_frames >= track.history.size())
    throw InvalidArgument("history too short for the requested window");
  double sum = 0.0;
  auto prev = track.history.begin() + static_cast<std::ptrdiff_t>(start);
  const auto stop = prev + static_cast<std::ptrdiff_t>(window_frames);
  for (auto it = prev; it != stop; prev = it) sum += euclidean_distance((++it)->centroid, prev->centroid);
  return sum;
}

// Trailing-window activity of every track observed at upto_frame whose
// history holds at least window_frames + 1 entries. Missed frames inside a
// track contribute one displacement across the gap.
inline std::vector<WindowActivity> trailing_activity(std::span<const Track> tracks,
                                                     std::uint64_t upto_frame,
                                                     const ActivityConfig& config) {
  config.validate();
  std::vector<WindowActivity> out;
  for (const auto& t : tracks) {
    const std::size_t n = t.history.size();
    if (n < config.window_frames + 1 || t.last().frame_index != upto_frame) continue;
    const std::size_t start = n - 1 - config.window_frames;
    out.push_back({t.id, t.history[start].frame_index, upto_frame,
                   activity_level(t, start, config.window_frames)});
  }
  return out;
}

// Windows ending at upto_frame whose activity is strictly below the threshold.
inline std::vector<InactivityEvent> evaluate_inactivity(std::span<const Track> tracks,
                                                        std::uint64_t upto_frame,
                                                        const ActivityConfig& config = {}) {
  auto windows = trailing_activity(tracks, upto_frame, config);
  std::erase_if(windows, [&](const WindowActivity& w) {
    return !(w.activity_level < config.activity_threshold);
  });
  return windows;
}

// Merges overlapping flagged windows of the same track into single events.
// An open event closes when its track is evaluated and not flagged, when the
// next flagged window no longer overlaps it, when the track is removed, or
// at finish().
class InactivityCoalescer {
 public:
  // Feed every window evaluated in one frame step (flagged or not).
  // Returns events that closed during this step.
  std::vector<AnomalyEvent> step(std::span<const WindowActivity> evaluated, double threshold,
                                 std::span<const TrackId> removed = {}) {
    std::vector<AnomalyEvent> closed;
    for (const auto& w : evaluated) {
      auto it = open_.find(w.track_id);
      const bool flagged = w.activity_level < threshold;
      if (it != open_.end()) {
        if (flagged && w.window_start_frame <= it->second.frame_end) {
          it->second.frame_end = w.window_end_frame;
          it->second.value = std::min(it->second.value, w.activity_level);
          continue;
        }
        closed.push_back(std::move(it->second));
        open_.erase(it);
      }
      if (flagged)
        open_.emplace(w.track_id, AnomalyEvent{EventKind::inactivity, w.window_start_frame,
                                               w.window_end_frame, {w.track_id},
                                               w.activity_level});
    }
    for (const auto& id : removed) {
      auto it = open_.find(id);
      if (it == open_.end()) continue;
      closed.push_back(std::move(it->second));
      open_.erase(it);
    }
    return closed;
  }

  std::vector<AnomalyEvent> finish() {
    std::vector<AnomalyEvent> out;
    for (auto& [id, e] : open_) out.push_back(std::move(e));
    open_.clear();
    return out;
  }

  // Earliest frame_start among open events, if any.
  std::optional<std::uint64_t> earliest_open_start() const {
    std::optional<std::uint64_t> best;
    for (const auto& [id, e] : open_)
      if (!best || e.frame_start < *best) best = e.frame_start;
    return best;
  }

  std::size_t open_count() const noexcept { return open_.size(); }

 private:
  std::map<TrackId, AnomalyEvent> open_;
};

}  // namespace flockwatch
