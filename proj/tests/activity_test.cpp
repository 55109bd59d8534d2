#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flockwatch/activity.hpp"
#include "test_support.hpp"

using namespace flockwatch;
using flockwatch::testing::track_of;

namespace {

std::vector<Point2D> line_path(std::size_t entries, double step) {
  std::vector<Point2D> p;
  for (std::size_t i = 0; i < entries; ++i) p.push_back({static_cast<double>(i) * step, 0.0});
  return p;
}

std::vector<Point2D> random_walk(std::mt19937_64& rng, std::size_t entries, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<Point2D> p{{500, 500}};
  while (p.size() < entries) p.push_back({p.back().x + n(rng), p.back().y + n(rng)});
  return p;
}

// Independent re-summation straight from coordinates.
double step_sum(const std::vector<Point2D>& p, std::size_t start, std::size_t T) {
  double s = 0;
  for (std::size_t i = start + 1; i <= start + T; ++i)
    s += std::hypot(p[i].x - p[i - 1].x, p[i].y - p[i - 1].y);
  return s;
}

}  // namespace

TEST(Displacement, Examples) {
  EXPECT_DOUBLE_EQ(displacement(track_of({{0, 0}, {3, 4}}), 1), 5.0);
  EXPECT_DOUBLE_EQ(displacement(track_of({{2, 2}, {2, 2}}), 1), 0.0);

  Track t;
  t.history.push_back({0, centroid({10, 20, 4, 6}), {10, 20, 4, 6}});
  t.history.push_back({1, centroid({13, 24, 4, 6}), {13, 24, 4, 6}});
  EXPECT_DOUBLE_EQ(displacement(t, 1), 5.0);
}

TEST(Displacement, OutOfRange) {
  const auto t = track_of({{0, 0}, {1, 0}});
  EXPECT_THROW(displacement(t, 0), InvalidArgument);
  EXPECT_THROW(displacement(t, 2), InvalidArgument);
}

TEST(ActivityLevel, Examples) {
  EXPECT_EQ(activity_level(track_of(line_path(51, 0.0)), 0, 50), 0.0);
  EXPECT_EQ(activity_level(track_of(line_path(51, 1.0)), 0, 50), 50.0);
  EXPECT_THROW(activity_level(track_of(line_path(50, 1.0)), 0, 50), InvalidArgument);
  EXPECT_THROW(activity_level(track_of(line_path(60, 1.0)), 10, 50), InvalidArgument);
}

TEST(ActivityLevel, EqualsStepSummationOnRandomWalks) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto path = random_walk(rng, 120, 2.0);
    const auto t = track_of(path);
    for (std::size_t start : {0u, 13u, 69u})
      EXPECT_NEAR(activity_level(t, start, 50), step_sum(path, start, 50), 1e-9);
  }
}

TEST(ActivityProperties, AdditiveNonNegativeTranslationAndScale) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 100; ++i) {
    const auto path = random_walk(rng, 81, 3.0);
    const auto t = track_of(path);
    const double whole = activity_level(t, 0, 80);
    EXPECT_GE(whole, 0.0);
    EXPECT_NEAR(whole, activity_level(t, 0, 30) + activity_level(t, 30, 50), 1e-9);

    auto shifted = path;
    for (auto& p : shifted) p = {p.x + 250.0, p.y - 75.0};
    EXPECT_NEAR(activity_level(track_of(shifted), 0, 80), whole, 1e-9);

    auto scaled = path;
    for (auto& p : scaled) p = {p.x * 2.5, p.y * 2.5};
    EXPECT_NEAR(activity_level(track_of(scaled), 0, 80), 2.5 * whole, 1e-9);
  }
}

TEST(EvaluateInactivity, StationaryBirdFlaggedAtZero) {
  const auto t = track_of(line_path(51, 0.0), 4);
  const auto ev = evaluate_inactivity(std::span<const Track>(&t, 1), 50);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].track_id.value, 4u);
  EXPECT_EQ(ev[0].activity_level, 0.0);
  EXPECT_EQ(ev[0].window_start_frame, 0u);
  EXPECT_EQ(ev[0].window_end_frame, 50u);
}

TEST(EvaluateInactivity, MovingBirdNotFlagged) {
  const auto t = track_of(line_path(51, 1.0));
  EXPECT_TRUE(evaluate_inactivity(std::span<const Track>(&t, 1), 50).empty());
}

TEST(EvaluateInactivity, ShortHistorySkipped) {
  const auto t = track_of(line_path(30, 0.0));
  EXPECT_TRUE(evaluate_inactivity(std::span<const Track>(&t, 1), 29).empty());
}

TEST(EvaluateInactivity, SlowBirdFlagged) {
  // 0.3 px steps: brute-force window sum is 15 px.
  const auto path = line_path(51, 0.3);
  const auto t = track_of(path);
  const auto ev = evaluate_inactivity(std::span<const Track>(&t, 1), 50);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_NEAR(ev[0].activity_level, step_sum(path, 0, 50), 1e-9);
  EXPECT_NEAR(ev[0].activity_level, 15.0, 1e-9);
}

TEST(EvaluateInactivity, OnlyTracksObservedAtTheFrame) {
  const auto t = track_of(line_path(51, 0.0));
  EXPECT_TRUE(evaluate_inactivity(std::span<const Track>(&t, 1), 51).empty());
}

TEST(EvaluateInactivity, StrictThreshold) {
  // 40 steps of 0.5 px and 10 still steps: exactly 20 px, not below 20.
  std::vector<Point2D> p{{0, 0}};
  for (int i = 0; i < 50; ++i) p.push_back({p.back().x + (i < 40 ? 0.5 : 0.0), 0});
  const auto t = track_of(p);
  ASSERT_EQ(activity_level(t, 0, 50), 20.0);
  EXPECT_TRUE(evaluate_inactivity(std::span<const Track>(&t, 1), 50).empty());
}

TEST(EvaluateInactivity, GapsContributeOneDisplacement) {
  Track t;
  for (std::uint64_t f = 0; f < 51; ++f) {
    const std::uint64_t frame = f < 25 ? f : f + 10;  // ten missed frames
    t.history.push_back({frame, {100, 100}, {80, 80, 40, 40}});
  }
  const auto ev = evaluate_inactivity(std::span<const Track>(&t, 1), 60);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].window_start_frame, 0u);
  EXPECT_EQ(ev[0].window_end_frame, 60u);
}

TEST(InactivityCoalescer, MergesRunsAndClosesOnRecovery) {
  InactivityCoalescer c;
  const TrackId id{3};
  std::vector<AnomalyEvent> closed;
  for (std::uint64_t end = 50; end <= 100; ++end) {
    WindowActivity w{id, end - 50, end, end == 70 ? 1.0 : 5.0};
    auto out = c.step(std::span<const WindowActivity>(&w, 1), 20.0);
    EXPECT_TRUE(out.empty());
  }
  WindowActivity moving{id, 51, 101, 30.0};
  closed = c.step(std::span<const WindowActivity>(&moving, 1), 20.0);
  ASSERT_EQ(closed.size(), 1u);
  EXPECT_EQ(closed[0].frame_start, 0u);
  EXPECT_EQ(closed[0].frame_end, 100u);
  EXPECT_EQ(closed[0].value, 1.0);
  EXPECT_EQ(closed[0].track_ids, std::vector<TrackId>{id});
  EXPECT_TRUE(c.finish().empty());
}

TEST(InactivityCoalescer, ClosesOnRemovalAndFinish) {
  InactivityCoalescer c;
  WindowActivity a{TrackId{1}, 0, 50, 0.0};
  WindowActivity b{TrackId{2}, 0, 50, 0.0};
  const WindowActivity both[] = {a, b};
  EXPECT_TRUE(c.step(both, 20.0).empty());
  EXPECT_EQ(c.earliest_open_start(), 0u);
  const TrackId gone{1};
  const auto closed = c.step({}, 20.0, std::span<const TrackId>(&gone, 1));
  ASSERT_EQ(closed.size(), 1u);
  EXPECT_EQ(closed[0].track_ids[0].value, 1u);
  const auto rest = c.finish();
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest[0].track_ids[0].value, 2u);
}

TEST(ActivityConfig, Validation) {
  EXPECT_THROW((ActivityConfig{0, 20.0}.validate()), InvalidArgument);
  EXPECT_THROW((ActivityConfig{50, 0.0}.validate()), InvalidArgument);
  EXPECT_NO_THROW((ActivityConfig{}.validate()));
}
