#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flockwatch/activity.hpp"
#include "flockwatch/config.hpp"
#include "flockwatch/error.hpp"
#include "flockwatch/events.hpp"
#include "flockwatch/geometry.hpp"
#include "flockwatch/huddling.hpp"
#include "flockwatch/spatial_index.hpp"

namespace flockwatch {

// Seeded source: std::mt19937_64 for raw bits, 53-bit uniform doubles,
// Box-Muller normals and Knuth's Poisson sampler, so output depends only on
// the seed and not on the standard library's distribution implementations.
class ScenarioRng {
 public:
  explicit ScenarioRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal(double sigma) {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v * sigma;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    return r * std::cos(a) * sigma;
  }

  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

enum class MotionKind { random_walk, stationary, converge_to };

struct MotionModel {
  MotionKind kind = MotionKind::random_walk;
};

enum class Layout { grid, uniform };

struct ScenarioSpec {
  std::uint64_t seed = 1;
  double arena_width = 1280.0;
  double arena_height = 720.0;
  std::size_t n_birds = 10;
  std::uint64_t frames = 100;
  Layout layout = Layout::grid;

  MotionModel motion;                          // applies to every bird ...
  std::map<std::size_t, MotionModel> overrides;  // ... unless overridden here
  double step_sigma = 1.0;                     // per-axis Gaussian step, pixels
  double max_step = 0.0;                       // step length cap; 0 disables
  Point2D converge_target{640.0, 360.0};
  std::uint64_t converge_start = 0;
  std::uint64_t converge_end = 0;
  double converge_spread = 0.0;  // final cluster radius around the target

  double box_width = 40.0;
  double box_height = 40.0;

  double jitter_sigma = 0.0;
  double miss_probability = 0.0;
  double false_positive_rate = 0.0;  // expected false detections per frame

  HuddleConfig huddle;
  ActivityConfig activity;

  const MotionModel& motion_for(std::size_t bird) const {
    auto it = overrides.find(bird);
    return it == overrides.end() ? motion : it->second;
  }

  void validate() const {
    if (n_birds < 1) throw ConfigError("n_birds", "must be at least 1");
    if (frames < 1) throw ConfigError("frames", "must be at least 1");
    if (!(arena_width > 0.0) || !std::isfinite(arena_width))
      throw ConfigError("arena_width", "must be positive");
    if (!(arena_height > 0.0) || !std::isfinite(arena_height))
      throw ConfigError("arena_height", "must be positive");
    if (!(box_width > 0.0) || box_width > arena_width)
      throw ConfigError("box_width", "must be positive and fit the arena");
    if (!(box_height > 0.0) || box_height > arena_height)
      throw ConfigError("box_height", "must be positive and fit the arena");
    if (!(step_sigma >= 0.0) || !std::isfinite(step_sigma))
      throw ConfigError("step_sigma", "must be non-negative");
    if (!(max_step >= 0.0) || !std::isfinite(max_step))
      throw ConfigError("max_step", "must be non-negative");
    if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma))
      throw ConfigError("jitter_sigma", "must be non-negative");
    if (!(miss_probability >= 0.0 && miss_probability <= 1.0))
      throw ConfigError("miss_probability", "must lie in [0, 1]");
    if (!(false_positive_rate >= 0.0) || !std::isfinite(false_positive_rate))
      throw ConfigError("false_positive_rate", "must be non-negative");
    if (converge_end < converge_start)
      throw ConfigError("converge_end", "must not precede converge_start");
    if (!is_finite(converge_target)) throw ConfigError("converge_x", "must be finite");
    if (!(converge_spread >= 0.0) || !std::isfinite(converge_spread))
      throw ConfigError("converge_spread", "must be non-negative");
    for (const auto& [bird, m] : overrides)
      if (bird >= n_birds)
        throw ConfigError("bird." + std::to_string(bird) + ".motion", "bird index out of range");
    huddle.validate();
    activity.validate();
  }
};

// Ground truth and observations for one frame.
struct SyntheticFrame {
  std::uint64_t frame_index = 0;
  std::vector<BoundingBox> true_boxes;  // index = bird id
  std::vector<Point2D> true_centroids;
  FrameDetections detections;
};

// Produces a scenario one frame at a time, holding only current positions.
class ScenarioStream {
 public:
  explicit ScenarioStream(ScenarioSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
    spec_.validate();
    lo_ = {0.5 * spec_.box_width, 0.5 * spec_.box_height};
    hi_ = {spec_.arena_width - 0.5 * spec_.box_width, spec_.arena_height - 0.5 * spec_.box_height};
    place_birds();
  }

  const ScenarioSpec& spec() const noexcept { return spec_; }

  std::optional<SyntheticFrame> next() {
    if (frame_ >= spec_.frames) return std::nullopt;
    if (frame_ > 0) advance();

    SyntheticFrame out;
    out.frame_index = frame_;
    out.detections.frame_index = frame_;
    out.true_boxes.reserve(pos_.size());
    out.true_centroids.reserve(pos_.size());
    for (const auto& p : pos_) {
      const BoundingBox box{p.x - 0.5 * spec_.box_width, p.y - 0.5 * spec_.box_height,
                            spec_.box_width, spec_.box_height};
      out.true_boxes.push_back(box);
      out.true_centroids.push_back(centroid(box));

      const bool missed = spec_.miss_probability > 0.0 && rng_.uniform() < spec_.miss_probability;
      BoundingBox seen = box;
      if (spec_.jitter_sigma > 0.0) {
        seen.x_min += rng_.normal(spec_.jitter_sigma);
        seen.y_min += rng_.normal(spec_.jitter_sigma);
      }
      const double score = rng_.uniform(0.4, 1.0);
      if (!missed) out.detections.detections.push_back({frame_, seen, score, "chicken"});
    }
    const auto n_false = rng_.poisson(spec_.false_positive_rate);
    for (std::uint64_t k = 0; k < n_false; ++k) {
      const double cx = rng_.uniform(lo_.x, hi_.x);
      const double cy = rng_.uniform(lo_.y, hi_.y);
      const BoundingBox box{cx - 0.5 * spec_.box_width, cy - 0.5 * spec_.box_height,
                            spec_.box_width, spec_.box_height};
      out.detections.detections.push_back({frame_, box, rng_.uniform(0.05, 0.6), "chicken"});
    }
    ++frame_;
    return out;
  }

 private:
  static double reflect(double v, double lo, double hi) {
    if (hi <= lo) return 0.5 * (lo + hi);
    for (int i = 0; i < 8 && (v < lo || v > hi); ++i) v = v < lo ? 2.0 * lo - v : 2.0 * hi - v;
    return std::clamp(v, lo, hi);
  }

  void place_birds() {
    const std::size_t n = spec_.n_birds;
    pos_.resize(n);
    if (spec_.layout == Layout::grid) {
      const double w = hi_.x - lo_.x;
      const double h = hi_.y - lo_.y;
      const auto cols = static_cast<std::size_t>(
          std::max(1.0, std::ceil(std::sqrt(static_cast<double>(n) * std::max(w, 1.0) /
                                            std::max(h, 1.0)))));
      const std::size_t rows = (n + cols - 1) / cols;
      for (std::size_t i = 0; i < n; ++i) {
        const double fx = (static_cast<double>(i % cols) + 0.5) / static_cast<double>(cols);
        const double fy = (static_cast<double>(i / cols) + 0.5) / static_cast<double>(rows);
        pos_[i] = {lo_.x + fx * w, lo_.y + fy * h};
      }
    } else {
      for (auto& p : pos_) p = {rng_.uniform(lo_.x, hi_.x), rng_.uniform(lo_.y, hi_.y)};
    }

    origin_ = pos_;
    place_targets();
  }

  // Converging birds keep their relative layout and contract towards the
  // target, ending within converge_spread of it. All pairwise distances shrink
  // by the same factor, so paths never cross.
  void place_targets() {
    targets_.assign(pos_.size(), spec_.converge_target);
    Point2D mean{0.0, 0.0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      if (spec_.motion_for(i).kind != MotionKind::converge_to) continue;
      mean = {mean.x + origin_[i].x, mean.y + origin_[i].y};
      ++n;
    }
    if (n == 0) return;
    mean = {mean.x / static_cast<double>(n), mean.y / static_cast<double>(n)};
    double reach = 0.0;
    for (std::size_t i = 0; i < pos_.size(); ++i)
      if (spec_.motion_for(i).kind == MotionKind::converge_to)
        reach = std::max(reach, euclidean_distance(origin_[i], mean));
    const double scale = reach > 0.0 ? spec_.converge_spread / reach : 0.0;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      if (spec_.motion_for(i).kind != MotionKind::converge_to) continue;
      targets_[i] = {std::clamp(spec_.converge_target.x + scale * (origin_[i].x - mean.x), lo_.x, hi_.x),
                     std::clamp(spec_.converge_target.y + scale * (origin_[i].y - mean.y), lo_.y, hi_.y)};
    }
  }

  void walk(Point2D& p) {
    double dx = rng_.normal(spec_.step_sigma);
    double dy = rng_.normal(spec_.step_sigma);
    if (spec_.max_step > 0.0) {
      const double len = std::sqrt(dx * dx + dy * dy);
      if (len > spec_.max_step) {
        dx *= spec_.max_step / len;
        dy *= spec_.max_step / len;
      }
    }
    p = {reflect(p.x + dx, lo_.x, hi_.x), reflect(p.y + dy, lo_.y, hi_.y)};
  }

  // Moves every bird from frame_ - 1 to frame_.
  void advance() {
    const bool before = frame_ <= spec_.converge_start;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      switch (spec_.motion_for(i).kind) {
        case MotionKind::stationary:
          break;
        case MotionKind::random_walk:
          walk(pos_[i]);
          break;
        case MotionKind::converge_to:
          if (before) {
            if (spec_.step_sigma > 0.0) walk(pos_[i]);
            origin_[i] = pos_[i];
          }
          break;
      }
    }
    if (frame_ == spec_.converge_start) place_targets();
    if (frame_ < spec_.converge_start) return;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      if (spec_.motion_for(i).kind != MotionKind::converge_to) continue;
      if (frame_ >= spec_.converge_end) {
        pos_[i] = targets_[i];
        continue;
      }
      const double t = static_cast<double>(frame_ - spec_.converge_start) /
                       static_cast<double>(spec_.converge_end - spec_.converge_start);
      pos_[i] = {origin_[i].x + t * (targets_[i].x - origin_[i].x),
                 origin_[i].y + t * (targets_[i].y - origin_[i].y)};
    }
  }

  ScenarioSpec spec_;
  ScenarioRng rng_;
  Point2D lo_;
  Point2D hi_;
  std::vector<Point2D> pos_;
  std::vector<Point2D> origin_;
  std::vector<Point2D> targets_;
  std::uint64_t frame_ = 0;
};

// Labels derived from the noiseless trajectories by the two labeling rules:
// a frame is huddling when some bird has more than count_threshold birds
// (itself included) within radius; a bird is inactive when it moves less than
// activity_threshold over some window of window_frames consecutive steps.
struct ScenarioTruth {
  std::vector<std::vector<Point2D>> trajectories;  // [bird][frame]
  std::vector<std::uint64_t> huddling_frames;
  std::set<std::uint64_t> inactive_birds;
  std::vector<AnomalyEvent> events;  // in output order
};

struct Scenario {
  std::vector<FrameDetections> detections;
  std::vector<FrameDetections> true_boxes;  // score 1, one box per bird
  ScenarioTruth truth;
};

inline ScenarioTruth label_trajectories(std::vector<std::vector<Point2D>> trajectories,
                                        std::uint64_t frames, const HuddleConfig& huddle,
                                        const ActivityConfig& activity) {
  ScenarioTruth truth;
  truth.trajectories = std::move(trajectories);
  const auto& traj = truth.trajectories;

  // Huddling: linear-scan neighbour counts on every frame.
  std::optional<AnomalyEvent> run;
  std::set<std::uint64_t> run_ids;
  std::vector<TaggedPoint> birds(traj.size());
  for (std::uint64_t f = 0; f < frames; ++f) {
    for (std::size_t b = 0; b < traj.size(); ++b) birds[b] = {traj[b][f], b};
    std::size_t max_count = 0;
    std::set<std::uint64_t> involved;
    for (const auto& bird : birds) {
      const std::size_t n = brute_force_count(std::span<const TaggedPoint>(birds), bird.point,
                                              huddle.radius);
      max_count = std::max(max_count, n);
      if (n > huddle.count_threshold) involved.insert(bird.tag);
    }
    if (!involved.empty()) {
      truth.huddling_frames.push_back(f);
      if (!run) {
        run = AnomalyEvent{EventKind::huddling, f, f, {}, 0.0};
        run_ids.clear();
      }
      run->frame_end = f;
      run->value = std::max(run->value, static_cast<double>(max_count));
      run_ids.insert(involved.begin(), involved.end());
    } else if (run) {
      for (auto id : run_ids) run->track_ids.push_back(TrackId{id});
      truth.events.push_back(*run);
      run.reset();
    }
  }
  if (run) {
    for (auto id : run_ids) run->track_ids.push_back(TrackId{id});
    truth.events.push_back(*run);
  }

  // Inactivity: every window of T steps, consecutive flagged windows merged.
  const std::size_t T = activity.window_frames;
  for (std::size_t b = 0; b < traj.size(); ++b) {
    const auto& path = traj[b];
    std::optional<AnomalyEvent> open;
    for (std::size_t start = 0; start + T < path.size(); ++start) {
      double sum = 0.0;
      for (std::size_t i = start + 1; i <= start + T; ++i)
        sum += euclidean_distance(path[i], path[i - 1]);
      if (sum < activity.activity_threshold) {
        truth.inactive_birds.insert(b);
        if (!open) open = AnomalyEvent{EventKind::inactivity, start, start + T, {TrackId{b}}, sum};
        open->frame_end = start + T;
        open->value = std::min(open->value, sum);
      } else if (open) {
        truth.events.push_back(*open);
        open.reset();
      }
    }
    if (open) truth.events.push_back(*open);
  }
  std::sort(truth.events.begin(), truth.events.end(), event_order);
  return truth;
}

inline Scenario generate(const ScenarioSpec& spec) {
  ScenarioStream stream(spec);
  Scenario s;
  std::vector<std::vector<Point2D>> traj(spec.n_birds);
  for (auto& t : traj) t.reserve(static_cast<std::size_t>(spec.frames));
  while (auto f = stream.next()) {
    FrameDetections truth_frame{f->frame_index, {}};
    for (std::size_t b = 0; b < f->true_boxes.size(); ++b) {
      traj[b].push_back(f->true_centroids[b]);
      truth_frame.detections.push_back({f->frame_index, f->true_boxes[b], 1.0, "chicken"});
    }
    s.true_boxes.push_back(std::move(truth_frame));
    s.detections.push_back(std::move(f->detections));
  }
  s.truth = label_trajectories(std::move(traj), spec.frames, spec.huddle, spec.activity);
  return s;
}

namespace detail {

inline MotionKind parse_motion(const std::string& key, const std::string& v) {
  if (v == "random_walk") return MotionKind::random_walk;
  if (v == "stationary") return MotionKind::stationary;
  if (v == "converge_to" || v == "converge") return MotionKind::converge_to;
  throw ConfigError(key, "expected random_walk, stationary or converge_to, got '" + v + "'");
}

}  // namespace detail

// Scenario document in the key = value format. Per-bird motion overrides are
// written "bird.<index>.motion = stationary".
inline ScenarioSpec load_scenario(std::string_view text) {
  auto doc = KeyValueDocument::parse(text);
  ScenarioSpec s;
  s.seed = static_cast<std::uint64_t>(doc.get_int("seed", static_cast<std::int64_t>(s.seed)));
  s.arena_width = doc.get_double("arena_width", s.arena_width);
  s.arena_height = doc.get_double("arena_height", s.arena_height);
  s.n_birds = doc.get_count("n_birds", s.n_birds, 1);
  s.frames = doc.get_count("frames", s.frames, 1);
  const auto layout = doc.get_string("layout", "grid");
  if (layout == "grid")
    s.layout = Layout::grid;
  else if (layout == "uniform")
    s.layout = Layout::uniform;
  else
    throw ConfigError("layout", "expected grid or uniform, got '" + layout + "'");
  s.motion.kind = detail::parse_motion("motion", doc.get_string("motion", "random_walk"));
  s.step_sigma = doc.get_double("step_sigma", s.step_sigma);
  s.max_step = doc.get_double("max_step", s.max_step);
  s.converge_target.x = doc.get_double("converge_x", s.converge_target.x);
  s.converge_target.y = doc.get_double("converge_y", s.converge_target.y);
  s.converge_start = doc.get_count("converge_start", s.converge_start, 0);
  s.converge_end = doc.get_count("converge_end", s.converge_end, 0);
  s.converge_spread = doc.get_double("converge_spread", s.converge_spread);
  s.box_width = doc.get_double("box_width", s.box_width);
  s.box_height = doc.get_double("box_height", s.box_height);
  s.jitter_sigma = doc.get_double("jitter_sigma", s.jitter_sigma);
  s.miss_probability = doc.get_double("miss_probability", s.miss_probability);
  s.false_positive_rate = doc.get_double("false_positive_rate", s.false_positive_rate);

  const auto labels = detail::read_pipeline_keys(doc);
  s.huddle = labels.huddle;
  s.activity = labels.activity;

  for (const auto& [key, value] : doc.entries()) {
    constexpr std::string_view prefix = "bird.";
    constexpr std::string_view suffix = ".motion";
    if (!key.starts_with(prefix) || !key.ends_with(suffix) ||
        key.size() <= prefix.size() + suffix.size())
      continue;
    const auto digits =
        std::string_view(key).substr(prefix.size(), key.size() - prefix.size() - suffix.size());
    std::size_t bird = 0;
    if (!detail::parse_number(digits, bird)) throw ConfigError(key, "bad bird index");
    s.overrides[bird] = {detail::parse_motion(key, value)};
    doc.mark_used(key);
  }
  doc.reject_unknown();
  s.validate();
  return s;
}

}  // namespace flockwatch
