#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flockwatch/error.hpp"
#include "flockwatch/geometry.hpp"

namespace flockwatch {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) noexcept {
    return a += b;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Ratios return std::nullopt when their denominator is zero.
inline std::optional<double> precision(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

inline std::optional<double> recall(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline std::optional<double> f1(double p, double r) {
  if (!(p >= 0.0 && p <= 1.0 && r >= 0.0 && r <= 1.0))
    throw InvalidArgument("precision and recall must lie in [0, 1]");
  if (p + r == 0.0) return std::nullopt;
  return 2.0 * p * r / (p + r);
}

inline std::optional<double> f1(const ConfusionCounts& c) {
  const auto p = precision(c);
  const auto r = recall(c);
  if (!p || !r) return std::nullopt;
  return f1(*p, *r);
}

struct MatchResult {
  ConfusionCounts counts;
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (prediction, truth)
  // Per prediction: true when matched. Predictions below the score cut stay false.
  std::vector<bool> is_true_positive;
  std::size_t considered = 0;  // predictions passing the score cut
};

// Greedy IoU matching in descending confidence order (ties by input order).
// Each prediction takes the still-unmatched truth of highest IoU at or above
// iou_threshold, lowest truth index on ties; otherwise it is a false positive.
inline MatchResult match_detections(std::span<const Detection> predictions,
                                    std::span<const BoundingBox> truths,
                                    double iou_threshold = 0.5, double min_score = 0.0) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw InvalidArgument("iou_threshold must lie in (0, 1]");
  for (const auto& p : predictions) validate(p);
  for (const auto& t : truths) validate(t);

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i].confidence >= min_score) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].confidence > predictions[b].confidence;
  });

  MatchResult r;
  r.is_true_positive.assign(predictions.size(), false);
  r.considered = order.size();
  std::vector<bool> taken(truths.size(), false);
  for (std::size_t pi : order) {
    std::size_t best = truths.size();
    double best_iou = 0.0;
    for (std::size_t ti = 0; ti < truths.size(); ++ti) {
      if (taken[ti]) continue;
      const double v = iou(predictions[pi].bbox, truths[ti]);
      if (v >= iou_threshold && (best == truths.size() || v > best_iou)) {
        best = ti;
        best_iou = v;
      }
    }
    if (best == truths.size()) {
      ++r.counts.fp;
      continue;
    }
    taken[best] = true;
    r.is_true_positive[pi] = true;
    r.matches.emplace_back(pi, best);
    ++r.counts.tp;
  }
  r.counts.fn = truths.size() - r.counts.tp;
  return r;
}

// Predictions and ground truth for one image/frame.
struct EvalFrame {
  std::vector<Detection> predictions;
  std::vector<BoundingBox> truths;
};

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;  // score cut that produced this point

  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

using PRCurve = std::vector<PRPoint>;

// One point per distinct prediction score, from the highest score down.
//
// Matching at a lower score cut only appends predictions to the end of the
// confidence-ordered greedy pass, so the matches at any cut are a prefix of
// the full run and a single pass yields every point.
inline PRCurve pr_curve(std::span<const EvalFrame> frames, double iou_threshold = 0.5) {
  std::uint64_t n_truths = 0;
  for (const auto& f : frames) n_truths += f.truths.size();
  if (n_truths == 0) throw InvalidArgument("precision-recall curve needs at least one truth");

  std::vector<std::pair<double, bool>> scored;
  for (const auto& f : frames) {
    const auto m = match_detections(f.predictions, f.truths, iou_threshold);
    for (std::size_t i = 0; i < f.predictions.size(); ++i)
      scored.emplace_back(f.predictions[i].confidence, m.is_true_positive[i]);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  PRCurve curve;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    const double s = scored[i].first;
    for (; i < scored.size() && scored[i].first == s; ++i) (scored[i].second ? tp : fp)++;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(n_truths),
                     static_cast<double>(tp) / static_cast<double>(tp + fp), s});
  }
  return curve;
}

// Area under the monotone precision envelope, integrated exactly over recall:
// each point's precision is replaced by the largest precision at any recall
// at or beyond its own.
inline double average_precision(std::span<const PRPoint> curve) {
  if (curve.empty()) throw InvalidArgument("average precision of an empty curve");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& p = curve[i];
    if (!(p.recall >= 0.0 && p.recall <= 1.0 && p.precision >= 0.0 && p.precision <= 1.0))
      throw InvalidArgument("curve point outside [0, 1]");
    if (i > 0 && p.recall < curve[i - 1].recall)
      throw InvalidArgument("curve recall must be non-decreasing");
  }
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    envelope[i] = running;
  }
  double area = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    area += (curve[i].recall - prev_recall) * envelope[i];
    prev_recall = curve[i].recall;
  }
  return std::clamp(area, 0.0, 1.0);
}

inline double mean_ap(std::span<const double> per_class_ap) {
  if (per_class_ap.empty()) throw InvalidArgument("mean AP of zero classes");
  return std::accumulate(per_class_ap.begin(), per_class_ap.end(), 0.0) /
         static_cast<double>(per_class_ap.size());
}

// One row of an evaluation table. Ratios are derived from the counts on demand.
struct EvalRow {
  std::string category;
  std::uint64_t total = 0;
  ConfusionCounts counts;
  std::optional<double> map;

  std::optional<double> precision() const { return flockwatch::precision(counts); }
  std::optional<double> recall() const { return flockwatch::recall(counts); }
  std::optional<double> f1() const { return flockwatch::f1(counts); }
};

struct EvalReport {
  std::vector<EvalRow> rows;

  const EvalRow* find(std::string_view category) const {
    for (const auto& r : rows)
      if (r.category == category) return &r;
    return nullptr;
  }
};

inline std::string render_text(const EvalReport& report) {
  auto num = [](const std::optional<double>& v) -> std::string {
    if (!v) return "—";
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(14) << "category" << std::right << std::setw(9) << "total"
     << std::setw(9) << "tp" << std::setw(9) << "fp" << std::setw(9) << "fn" << std::setw(11)
     << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(9) << "mAP"
     << '\n';
  // setw counts bytes, so pad the multi-byte dash by hand.
  auto cell = [](const std::string& s, int width) {
    const int visible = s == "—" ? 1 : static_cast<int>(s.size());
    return std::string(static_cast<std::size_t>(std::max(0, width - visible)), ' ') + s;
  };
  for (const auto& r : report.rows) {
    os << std::left << std::setw(14) << r.category << std::right << std::setw(9) << r.total
       << std::setw(9) << r.counts.tp << std::setw(9) << r.counts.fp << std::setw(9)
       << r.counts.fn << cell(num(r.precision()), 11) << cell(num(r.recall()), 9)
       << cell(num(r.f1()), 9) << cell(r.map ? num(r.map) : "-", 9) << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const EvalReport& report) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"category", r.category},
                    {"total", r.total},
                    {"tp", r.counts.tp},
                    {"fp", r.counts.fp},
                    {"fn", r.counts.fn},
                    {"precision", opt(r.precision())},
                    {"recall", opt(r.recall())},
                    {"f1", opt(r.f1())},
                    {"map", opt(r.map)}});
  }
  return {{"rows", rows}};
}

}  // namespace flockwatch
