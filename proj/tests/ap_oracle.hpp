#pragma once

// Reference AP computation used by the metrics tests and the acceptance
// suite. It re-runs matching at every score cut and integrates the
// precision envelope numerically on a fixed recall grid.

#include <algorithm>
#include <cstddef>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "flockwatch/metrics.hpp"

namespace flockwatch::oracle {

struct CurvePoint {
  double recall;
  double precision;
};

// One point per distinct score, each from a fresh matching restricted to
// predictions at or above that score.
inline std::vector<CurvePoint> curve_by_enumeration(std::span<const EvalFrame> frames,
                                                    double iou_threshold = 0.5) {
  std::set<double, std::greater<>> scores;
  std::uint64_t n_truth = 0;
  for (const auto& f : frames) {
    n_truth += f.truths.size();
    for (const auto& p : f.predictions) scores.insert(p.confidence);
  }
  std::vector<CurvePoint> out;
  for (double s : scores) {
    ConfusionCounts c;
    for (const auto& f : frames) c += match_detections(f.predictions, f.truths, iou_threshold, s).counts;
    out.push_back({static_cast<double>(c.tp) / static_cast<double>(n_truth),
                   static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)});
  }
  return out;
}

// Precision envelope on a stretch (lo, hi) holding no recall breakpoint:
// the best precision among points beyond lo. Avoids midpoints, which can round
// onto lo when the stretch is one ulp wide.
inline double envelope_after(std::span<const CurvePoint> curve, long double lo) {
  double best = 0.0;
  for (const auto& p : curve)
    if (static_cast<long double>(p.recall) > lo) best = std::max(best, p.precision);
  return best;
}

// Integrates the envelope over (0, 1] on a grid of `cells` equal cells. Cells
// holding a recall breakpoint are split there, so the result is exact up to
// floating-point summation.
inline double integrate_envelope(std::span<const CurvePoint> curve, std::size_t cells = 1000000) {
  std::vector<double> breaks;
  for (const auto& p : curve)
    if (p.recall > 0.0 && p.recall < 1.0) breaks.push_back(p.recall);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  const long double h = 1.0L / static_cast<long double>(cells);
  long double area = 0.0L;
  std::size_t next_break = 0;
  double cached = -1.0;  // envelope value on the current break-free stretch
  for (std::size_t k = 0; k < cells; ++k) {
    const long double a = static_cast<long double>(k) * h;
    const long double b = static_cast<long double>(k + 1) * h;
    long double lo = a;
    bool split = false;
    while (next_break < breaks.size() && static_cast<long double>(breaks[next_break]) < b) {
      const long double cut = breaks[next_break];
      if (cut > lo) {
        area += (cut - lo) * envelope_after(curve, lo);
        lo = cut;
      }
      ++next_break;
      split = true;
    }
    if (split || cached < 0.0) cached = envelope_after(curve, lo);
    area += (b - lo) * cached;
  }
  return static_cast<double>(area);
}

// Random detection instance: at most `max_pred` predictions and `max_truth`
// truths over one or two frames, on a coarse grid so IoU values repeat and
// scores tie.
inline std::vector<EvalFrame> random_instance(std::mt19937_64& rng, std::size_t max_pred = 8,
                                              std::size_t max_truth = 4) {
  std::uniform_int_distribution<std::size_t> n_truth(1, max_truth);
  std::uniform_int_distribution<std::size_t> n_pred(0, max_pred);
  std::uniform_int_distribution<int> cell(0, 4);
  std::uniform_int_distribution<int> jitter(-4, 4);
  std::uniform_int_distribution<int> score(1, 6);
  std::uniform_int_distribution<int> frames(1, 2);

  std::vector<EvalFrame> out(static_cast<std::size_t>(frames(rng)));
  const std::size_t nt = n_truth(rng);
  const std::size_t np = n_pred(rng);
  for (std::size_t i = 0; i < nt; ++i)
    out[i % out.size()].truths.push_back({20.0 * cell(rng), 20.0 * cell(rng), 16.0, 16.0});
  for (std::size_t i = 0; i < np; ++i) {
    auto& f = out[(i + 1) % out.size()];
    BoundingBox b{20.0 * cell(rng), 20.0 * cell(rng), 16.0, 16.0};
    if (!f.truths.empty() && i % 2 == 0) b = f.truths[i % f.truths.size()];
    b.x_min += jitter(rng);
    b.y_min += jitter(rng);
    f.predictions.push_back({0, b, score(rng) / 7.0, "chicken"});
  }
  return out;
}

}  // namespace flockwatch::oracle
