#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flockwatch/activity.hpp"
#include "flockwatch/config.hpp"
#include "flockwatch/error.hpp"
#include "flockwatch/event_buffer.hpp"
#include "flockwatch/events.hpp"
#include "flockwatch/huddling.hpp"
#include "flockwatch/io.hpp"
#include "flockwatch/metrics.hpp"
#include "flockwatch/synth.hpp"
#include "flockwatch/tracker.hpp"

namespace flockwatch {

// Frame-by-frame analysis: tracking, huddling and inactivity detection, and
// ordered event emission.
//
// Events reach the sink sorted by (frame_start, kind, track ids). An event is
// held back until no open or future event can start at or before its
// frame_start. Held events beyond a fixed count spill to temporary files.
// Track histories are capped at window_frames + 1 entries.
class StreamAnalyzer {
 public:
  using Sink = std::function<void(const AnomalyEvent&)>;

  StreamAnalyzer(PipelineConfig config, Sink sink)
      : config_(with_history_cap(config)), tracker_(config_.tracker), sink_(std::move(sink)) {
    config_.validate();
  }

  const PipelineConfig& config() const noexcept { return config_; }
  const CentroidTracker& tracker() const noexcept { return tracker_; }

  FrameAssignment process(const FrameDetections& frame) {
    auto assignment = tracker_.update(frame);
    const auto tracks = tracker_.active_tracks();

    // Huddling looks at the birds seen in this frame.
    observed_.clear();
    for (const auto& t : tracks)
      if (t.last().frame_index == frame.frame_index) observed_.push_back({t.last().centroid, t.id.value});
    const auto verdict = classify_frame(observed_, config_.huddle, frame.frame_index);
    if (verdict.is_huddling) {
      if (!huddle_run_) {
        huddle_run_ = AnomalyEvent{EventKind::huddling, frame.frame_index, frame.frame_index, {}, 0.0};
        huddle_ids_.clear();
      }
      huddle_run_->frame_end = frame.frame_index;
      huddle_run_->value = std::max(huddle_run_->value, static_cast<double>(verdict.max_count));
      huddle_ids_.insert(verdict.involved.begin(), verdict.involved.end());
    } else {
      close_huddle_run();
    }

    const auto windows = trailing_activity(tracks, frame.frame_index, config_.activity);
    for (auto& e : coalescer_.step(windows, config_.activity.activity_threshold, assignment.removed))
      pending_.insert(std::move(e));

    flush_before(emission_bound(frame.frame_index));
    return assignment;
  }

  // Closes every open event and emits everything still buffered.
  void finish() {
    close_huddle_run();
    for (auto& e : coalescer_.finish()) pending_.insert(std::move(e));
    pending_.emit_all(sink_);
  }

  // History entries held across all live tracks plus open and buffered
  // events kept in memory (one head per spilled run).
  std::size_t retained_entries() const {
    std::size_t n = pending_.in_memory() + pending_.runs() + coalescer_.open_count();
    for (const auto& t : tracker_.active_tracks()) n += t.history.size();
    return n;
  }

 private:
  static PipelineConfig with_history_cap(PipelineConfig c) {
    c.tracker.history_limit = c.activity.window_frames + 1;
    return c;
  }

  void close_huddle_run() {
    if (!huddle_run_) return;
    for (auto id : huddle_ids_) huddle_run_->track_ids.push_back(TrackId{id});
    pending_.insert(std::move(*huddle_run_));
    huddle_run_.reset();
  }

  // No event that opens later, and no event still open, can start before the
  // returned frame.
  std::uint64_t emission_bound(std::uint64_t frame) const {
    std::uint64_t bound = frame + 1;
    if (huddle_run_) bound = std::min(bound, huddle_run_->frame_start);
    if (auto s = coalescer_.earliest_open_start()) bound = std::min(bound, *s);
    const std::size_t T = config_.activity.window_frames;
    for (const auto& t : tracker_.active_tracks()) {
      const std::size_t n = t.history.size();
      const std::size_t first = n > T ? n - T : 0;
      bound = std::min(bound, t.history[first].frame_index);
    }
    return bound;
  }

  void flush_before(std::uint64_t bound) { pending_.emit_before(bound, sink_); }

  PipelineConfig config_;
  CentroidTracker tracker_;
  Sink sink_;
  InactivityCoalescer coalescer_;
  std::optional<AnomalyEvent> huddle_run_;
  std::set<std::uint64_t> huddle_ids_;
  OrderedEventBuffer pending_;
  std::vector<TaggedPoint> observed_;
};

// Runs the analyzer over a whole in-memory stream.
inline std::vector<AnomalyEvent> analyze(std::span<const FrameDetections> frames,
                                         const PipelineConfig& config = {}) {
  std::vector<AnomalyEvent> out;
  StreamAnalyzer a(config, [&](const AnomalyEvent& e) { out.push_back(e); });
  for (const auto& f : frames) a.process(f);
  a.finish();
  return out;
}

struct AnalyzeSummary {
  std::uint64_t frames = 0;
  std::uint64_t events = 0;
};

// Streams `input` through the analyzer into `output`. The output file is
// written only if the whole input was processed.
inline AnalyzeSummary run_analyze(const std::filesystem::path& input,
                                  const PipelineConfig& config,
                                  const std::filesystem::path& output) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw Error("cannot open " + input.string());
  AnalyzeSummary summary;
  write_file_atomically(output, [&](std::ostream& out) {
    StreamAnalyzer a(config, [&](const AnomalyEvent& e) {
      out << format_event_record(e) << '\n';
      ++summary.events;
    });
    DetectionStreamReader reader(in);
    while (auto frame = reader.next()) {
      a.process(*frame);
      ++summary.frames;
    }
    a.finish();
  });
  return summary;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline std::set<std::uint64_t> huddling_frames(std::span<const AnomalyEvent> events) {
  std::set<std::uint64_t> frames;
  for (const auto& e : events)
    if (e.kind == EventKind::huddling)
      for (std::uint64_t f = e.frame_start; f <= e.frame_end; ++f) frames.insert(f);
  return frames;
}

inline std::set<std::uint64_t> inactive_tracks(std::span<const AnomalyEvent> events) {
  std::set<std::uint64_t> ids;
  for (const auto& e : events)
    if (e.kind == EventKind::inactivity)
      for (const auto& id : e.track_ids) ids.insert(id.value);
  return ids;
}

inline ConfusionCounts compare_sets(const std::set<std::uint64_t>& predicted,
                                    const std::set<std::uint64_t>& truth) {
  ConfusionCounts c;
  for (auto v : predicted) (truth.count(v) ? c.tp : c.fp)++;
  c.fn = truth.size() - c.tp;
  return c;
}

// Huddling is scored per frame, inactivity per track id.
inline EvalReport evaluate_events(std::span<const AnomalyEvent> predicted,
                                  std::span<const AnomalyEvent> truth) {
  EvalReport r;
  const auto th = huddling_frames(truth);
  const auto ti = inactive_tracks(truth);
  r.rows.push_back({"huddling", th.size(), compare_sets(huddling_frames(predicted), th), {}});
  r.rows.push_back({"inactivity", ti.size(), compare_sets(inactive_tracks(predicted), ti), {}});
  return r;
}

// Per-class IoU matching and AP; the row reports summed counts and the mean
// AP over classes present in the ground truth.
inline EvalReport evaluate_detections(std::span<const FrameDetections> predicted,
                                      std::span<const FrameDetections> truth,
                                      double iou_threshold = 0.5) {
  std::map<std::string, std::map<std::uint64_t, EvalFrame>> by_class;
  std::set<std::string> truth_classes;
  std::uint64_t n_truth = 0;
  for (const auto& f : truth)
    for (const auto& d : f.detections) {
      by_class[d.class_label][f.frame_index].truths.push_back(d.bbox);
      truth_classes.insert(d.class_label);
      ++n_truth;
    }
  for (const auto& f : predicted)
    for (const auto& d : f.detections) by_class[d.class_label][f.frame_index].predictions.push_back(d);

  EvalRow row{"detection", n_truth, {}, {}};
  std::vector<double> aps;
  for (const auto& [label, frames] : by_class) {
    std::vector<EvalFrame> flat;
    for (const auto& [idx, ef] : frames) {
      row.counts += match_detections(ef.predictions, ef.truths, iou_threshold).counts;
      flat.push_back(ef);
    }
    if (!truth_classes.count(label)) continue;
    const auto curve = pr_curve(flat, iou_threshold);
    aps.push_back(curve.empty() ? 0.0 : average_precision(curve));
  }
  if (!aps.empty()) row.map = mean_ap(aps);
  EvalReport r;
  r.rows.push_back(row);
  return r;
}

enum class StreamKind { empty, detections, events };

// Classifies a newline-delimited file by its first record.
inline StreamKind sniff_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    const auto j = detail::parse_json_line(line, line_no);
    if (j.contains("kind")) return StreamKind::events;
    if (j.contains("frame")) return StreamKind::detections;
    throw ParseError(line_no, "", "record is neither a detection nor an event");
  }
  return StreamKind::empty;
}

// Ground-truth boxes from a directory of VOC XML files. Frame numbers come
// from the trailing digits of <filename>, or of the XML file name.
inline std::vector<FrameDetections> read_voc_directory(const std::filesystem::path& dir) {
  std::map<std::uint64_t, FrameDetections> frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".xml") continue;
    GroundTruthFrame gt;
    try {
      gt = parse_voc_annotation(read_file(entry.path()));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), e.field(), entry.path().filename().string() + ": " + e.what());
    }
    auto idx = gt.identifier.empty() ? std::nullopt : frame_number_from_name(gt.identifier);
    if (!idx) idx = frame_number_from_name(entry.path().filename().string());
    if (!idx)
      throw ParseError(0, "filename",
                       entry.path().filename().string() + ": no frame number in the file name");
    auto& f = frames[*idx];
    f.frame_index = *idx;
    for (const auto& o : gt.objects) f.detections.push_back({*idx, o.bbox, 1.0, o.label});
  }
  std::vector<FrameDetections> out;
  for (auto& [idx, f] : frames) out.push_back(std::move(f));
  return out;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

inline void run_synthesize(const ScenarioSpec& spec, const std::filesystem::path& detections,
                           const std::filesystem::path& truth_events,
                           const std::optional<std::filesystem::path>& truth_boxes = {}) {
  const auto s = generate(spec);
  write_file_atomically(detections, [&](std::ostream& out) { write_detections(out, s.detections); });
  write_file_atomically(truth_events,
                        [&](std::ostream& out) { out << serialize_events(s.truth.events); });
  if (truth_boxes)
    write_file_atomically(*truth_boxes,
                          [&](std::ostream& out) { write_detections(out, s.true_boxes); });
}

}  // namespace flockwatch
