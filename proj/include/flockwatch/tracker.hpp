#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "flockwatch/error.hpp"
#include "flockwatch/geometry.hpp"

namespace flockwatch {

struct TrackPoint {
  std::uint64_t frame_index = 0;
  Point2D centroid;
  BoundingBox bbox;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

enum class TrackState { active, removed };

struct Track {
  TrackId id;
  std::deque<TrackPoint> history;
  std::uint64_t disappeared_count = 0;
  TrackState state = TrackState::active;

  const TrackPoint& last() const { return history.back(); }
};

struct TrackerConfig {
  // A track is removed once it has gone unmatched for more than this many
  // consecutive frames.
  std::uint64_t max_disappeared = 50;
  // Pairs farther apart than this are never matched. Infinity disables the gate.
  double max_distance = std::numeric_limits<double>::infinity();
  // Oldest history entries are dropped beyond this length; 0 keeps everything.
  std::size_t history_limit = 0;

  void validate() const {
    if (max_disappeared < 1) throw InvalidArgument("max_disappeared must be at least 1");
    if (std::isnan(max_distance) || !(max_distance > 0.0))
      throw InvalidArgument("max_distance must be positive or unbounded");
  }
};

struct FrameAssignment {
  std::uint64_t frame_index = 0;
  std::map<TrackId, std::size_t> matched;  // track -> detection index
  std::vector<TrackId> new_tracks;         // in detection-index order
  std::vector<TrackId> disappeared;        // unmatched this frame, still active
  std::vector<TrackId> removed;

  friend bool operator==(const FrameAssignment&, const FrameAssignment&) = default;
};

// Centroid tracker with globally greedy minimum-distance association.
//
// Each update pairs every active track with every detection, discards pairs
// beyond the distance gate, and repeatedly takes the closest remaining pair
// whose track and detection are both free. Ties on distance go to the lower
// track id, then the lower detection index. Leftover detections become new
// tracks; leftover tracks age and are dropped after max_disappeared misses.
class CentroidTracker {
 public:
  explicit CentroidTracker(TrackerConfig config = {}) : config_(config) { config_.validate(); }

  const TrackerConfig& config() const noexcept { return config_; }

  // Active tracks ordered by id. Removed tracks are not retained.
  std::span<const Track> active_tracks() const noexcept { return tracks_; }

  std::uint64_t next_id() const noexcept { return next_id_; }
  std::optional<std::uint64_t> last_frame() const noexcept { return last_frame_; }

  FrameAssignment update(const FrameDetections& frame) {
    if (last_frame_ && frame.frame_index <= *last_frame_)
      throw InvalidArgument("frame_index " + std::to_string(frame.frame_index) +
                            " does not follow previous frame " + std::to_string(*last_frame_));
    validate(frame);

    const std::size_t n_det = frame.detections.size();
    centroids_.resize(n_det);
    for (std::size_t j = 0; j < n_det; ++j) centroids_[j] = centroid(frame.detections[j].bbox);

    pairs_.clear();
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      const Point2D& from = tracks_[i].last().centroid;
      for (std::size_t j = 0; j < n_det; ++j) {
        const double d = euclidean_distance(from, centroids_[j]);
        if (d <= config_.max_distance) pairs_.push_back({d, i, j});
      }
    }
    track_taken_.assign(tracks_.size(), false);
    detection_taken_.assign(n_det, false);
    FrameAssignment out;
    out.frame_index = frame.frame_index;
    std::size_t remaining = std::min(tracks_.size(), n_det);

    // Track slots are in id order, so slot order is id order. The order is
    // total, so sorting a leading batch at a time visits pairs exactly as a
    // full sort would; usually the first batch settles every match.
    const auto closer = [](const Candidate& a, const Candidate& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      if (a.track != b.track) return a.track < b.track;
      return a.detection < b.detection;
    };
    auto begin = pairs_.begin();
    while (remaining > 0 && begin != pairs_.end()) {
      const auto left = static_cast<std::size_t>(pairs_.end() - begin);
      const auto batch = static_cast<std::ptrdiff_t>(std::min(left, std::max<std::size_t>(64, 4 * remaining)));
      const auto stop = begin + batch;
      if (stop != pairs_.end()) std::nth_element(begin, stop, pairs_.end(), closer);
      std::sort(begin, stop, closer);
      for (auto it = begin; it != stop && remaining > 0; ++it) {
        const Candidate& c = *it;
        if (track_taken_[c.track] || detection_taken_[c.detection]) continue;
        track_taken_[c.track] = true;
        detection_taken_[c.detection] = true;
        --remaining;
        Track& t = tracks_[c.track];
        append(t, {frame.frame_index, centroids_[c.detection], frame.detections[c.detection].bbox});
        t.disappeared_count = 0;
        out.matched.emplace(t.id, c.detection);
      }
      begin = stop;
    }

    std::size_t kept = 0;
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      if (!track_taken_[i]) {
        Track& t = tracks_[i];
        if (++t.disappeared_count > config_.max_disappeared) {
          t.state = TrackState::removed;
          out.removed.push_back(t.id);
          continue;
        }
        out.disappeared.push_back(t.id);
      }
      if (kept != i) tracks_[kept] = std::move(tracks_[i]);
      ++kept;
    }
    tracks_.resize(kept);

    for (std::size_t j = 0; j < n_det; ++j) {
      if (detection_taken_[j]) continue;
      Track t;
      t.id = TrackId{next_id_++};
      t.history.push_back({frame.frame_index, centroids_[j], frame.detections[j].bbox});
      out.new_tracks.push_back(t.id);
      tracks_.push_back(std::move(t));
    }

    last_frame_ = frame.frame_index;
    return out;
  }

 private:
  struct Candidate {
    double distance;
    std::size_t track;
    std::size_t detection;
  };

  void append(Track& t, TrackPoint p) const {
    t.history.push_back(p);
    if (config_.history_limit > 0 && t.history.size() > config_.history_limit)
      t.history.pop_front();
  }

  TrackerConfig config_;
  std::vector<Track> tracks_;
  std::uint64_t next_id_ = 0;
  std::optional<std::uint64_t> last_frame_;

  // Scratch buffers reused across updates.
  std::vector<Point2D> centroids_;
  std::vector<Candidate> pairs_;
  std::vector<bool> track_taken_;
  std::vector<bool> detection_taken_;
};

}  // namespace flockwatch
