#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "flockwatch/config.hpp"
#include "flockwatch/error.hpp"
#include "flockwatch/events.hpp"
#include "flockwatch/geometry.hpp"

namespace flockwatch {

// ---------------------------------------------------------------------------
// Detection stream: one JSON object per line,
//   {"frame":0,"x_min":1.5,"y_min":2,"width":40,"height":40,"score":0.9,"label":"chicken"}
// "label" may be omitted. Blank lines are skipped.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_json_line(std::string_view line, std::size_t line_no) {
  try {
    auto j = nlohmann::json::parse(line.begin(), line.end());
    if (!j.is_object()) throw ParseError(line_no, "", "record is not a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    // parse_error for syntax, out_of_range for numbers such as 1e400
    throw ParseError(line_no, "", std::string("malformed JSON: ") + e.what());
  }
}

inline double json_real(const nlohmann::json& j, const char* field, std::size_t line_no) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(line_no, field, "missing field");
  if (!it->is_number()) throw ParseError(line_no, field, "expected a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ParseError(line_no, field, "must be finite");
  return v;
}

inline std::uint64_t json_index(const nlohmann::json& j, const char* field,
                                std::size_t line_no) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(line_no, field, "missing field");
  if (!it->is_number_unsigned())
    throw ParseError(line_no, field, "expected a non-negative integer");
  return it->get<std::uint64_t>();
}

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace detail

namespace detail {

// Reference parser: full JSON grammar with field-by-field diagnostics.
inline Detection parse_detection_json(std::string_view line, std::size_t line_no) {
  static constexpr std::string_view known[] = {"frame", "x_min", "y_min", "width",
                                               "height", "score", "label"};
  const auto j = parse_json_line(line, line_no);
  for (const auto& [key, value] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ParseError(line_no, key, "unknown field");

  Detection d;
  d.frame_index = json_index(j, "frame", line_no);
  d.bbox.x_min = json_real(j, "x_min", line_no);
  d.bbox.y_min = json_real(j, "y_min", line_no);
  d.bbox.width = json_real(j, "width", line_no);
  if (!(d.bbox.width > 0.0)) throw ParseError(line_no, "width", "must be positive");
  d.bbox.height = json_real(j, "height", line_no);
  if (!(d.bbox.height > 0.0)) throw ParseError(line_no, "height", "must be positive");
  d.confidence = json_real(j, "score", line_no);
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
    throw ParseError(line_no, "score", "must lie in [0, 1]");
  if (auto it = j.find("label"); it != j.end()) {
    if (!it->is_string()) throw ParseError(line_no, "label", "expected a string");
    d.class_label = it->get<std::string>();
  }
  return d;
}

// Fast scanner for the common shape: a flat object of known keys holding
// plain numbers and an ASCII label without escapes. Returns nullopt for
// anything else, including invalid values, so the reference parser can
// produce the diagnostic.
class DetectionScanner {
 public:
  explicit DetectionScanner(std::string_view s) : p_(s.data()), end_(s.data() + s.size()) {}

  std::optional<Detection> scan() {
    Detection d;
    unsigned seen = 0;
    skip_ws();
    if (!eat('{')) return std::nullopt;
    skip_ws();
    if (eat('}')) return std::nullopt;  // required fields missing
    for (;;) {
      std::string_view key;
      if (!string_token(key)) return std::nullopt;
      skip_ws();
      if (!eat(':')) return std::nullopt;
      skip_ws();
      const int slot = slot_of(key);
      if (slot < 0 || (seen & (1u << slot))) return std::nullopt;
      seen |= 1u << slot;
      bool ok = false;
      switch (slot) {
        case 0: ok = index_token(d.frame_index); break;
        case 1: ok = real_token(d.bbox.x_min); break;
        case 2: ok = real_token(d.bbox.y_min); break;
        case 3: ok = real_token(d.bbox.width); break;
        case 4: ok = real_token(d.bbox.height); break;
        case 5: ok = real_token(d.confidence); break;
        case 6: {
          std::string_view label;
          ok = string_token(label);
          d.class_label.assign(label);
          break;
        }
      }
      if (!ok) return std::nullopt;
      skip_ws();
      if (eat(',')) {
        skip_ws();
        continue;
      }
      if (!eat('}')) return std::nullopt;
      break;
    }
    skip_ws();
    if (p_ != end_ || (seen & 0x3f) != 0x3f) return std::nullopt;
    if (!(d.bbox.width > 0.0) || !(d.bbox.height > 0.0)) return std::nullopt;
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) return std::nullopt;
    return d;
  }

 private:
  static int slot_of(std::string_view k) {
    static constexpr std::string_view keys[] = {"frame", "x_min", "y_min", "width",
                                                "height", "score", "label"};
    for (int i = 0; i < 7; ++i)
      if (keys[i] == k) return i;
    return -1;
  }

  void skip_ws() {
    while (p_ != end_ && (*p_ == ' ' || *p_ == '\t' || *p_ == '\n' || *p_ == '\r')) ++p_;
  }

  bool eat(char c) {
    if (p_ == end_ || *p_ != c) return false;
    ++p_;
    return true;
  }

  bool string_token(std::string_view& out) {
    if (!eat('"')) return false;
    const char* start = p_;
    while (p_ != end_ && *p_ != '"') {
      const auto c = static_cast<unsigned char>(*p_);
      if (c < 0x20 || c >= 0x80 || c == '\\') return false;
      ++p_;
    }
    if (p_ == end_) return false;
    out = {start, static_cast<std::size_t>(p_ - start)};
    ++p_;
    return true;
  }

  static bool is_digit(char c) { return c >= '0' && c <= '9'; }

  // Extent of a token matching the JSON number grammar, or nullptr.
  const char* number_end(bool& integral) const {
    const char* q = p_;
    integral = true;
    if (q != end_ && *q == '-') {
      ++q;
      integral = false;
    }
    if (q == end_ || !is_digit(*q)) return nullptr;
    if (*q == '0') {
      ++q;
    } else {
      while (q != end_ && is_digit(*q)) ++q;
    }
    if (q != end_ && *q == '.') {
      integral = false;
      ++q;
      if (q == end_ || !is_digit(*q)) return nullptr;
      while (q != end_ && is_digit(*q)) ++q;
    }
    if (q != end_ && (*q == 'e' || *q == 'E')) {
      integral = false;
      ++q;
      if (q != end_ && (*q == '+' || *q == '-')) ++q;
      if (q == end_ || !is_digit(*q)) return nullptr;
      while (q != end_ && is_digit(*q)) ++q;
    }
    return q;
  }

  bool real_token(double& out) {
    bool integral = false;
    const char* q = number_end(integral);
    if (!q) return false;
    const auto r = std::from_chars(p_, q, out);
    if (r.ec != std::errc{} || r.ptr != q || !std::isfinite(out)) return false;
    p_ = q;
    return true;
  }

  bool index_token(std::uint64_t& out) {
    bool integral = false;
    const char* q = number_end(integral);
    if (!q || !integral) return false;
    const auto r = std::from_chars(p_, q, out);
    if (r.ec != std::errc{} || r.ptr != q) return false;
    p_ = q;
    return true;
  }

  const char* p_;
  const char* end_;
};

}  // namespace detail

inline Detection parse_detection_record(std::string_view line, std::size_t line_no = 0) {
  if (auto d = detail::DetectionScanner(line).scan()) return std::move(*d);
  return detail::parse_detection_json(line, line_no);
}

inline std::string format_detection_record(const Detection& d) {
  nlohmann::ordered_json j;
  j["frame"] = d.frame_index;
  j["x_min"] = d.bbox.x_min;
  j["y_min"] = d.bbox.y_min;
  j["width"] = d.bbox.width;
  j["height"] = d.bbox.height;
  j["score"] = d.confidence;
  j["label"] = d.class_label;
  return j.dump();
}

inline void write_detections(std::ostream& os, std::span<const FrameDetections> frames) {
  for (const auto& f : frames)
    for (const auto& d : f.detections) os << format_detection_record(d) << '\n';
}

// Largest jump allowed between consecutive observed frame indices. Missing
// frames are materialised as empty frames, so an unbounded jump would be an
// unbounded amount of work.
inline constexpr std::uint64_t max_frame_gap = 1'000'000;

namespace detail {

struct NumberedDetection {
  Detection detection;
  std::size_t line_no;
};

// Groups detections by frame and fills every missing index between the
// smallest and largest observed frame with an empty frame.
inline std::vector<FrameDetections> group_frames(std::vector<NumberedDetection> all) {
  std::vector<FrameDetections> out;
  if (all.empty()) return out;
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.detection.frame_index < b.detection.frame_index;
  });
  for (std::size_t i = 1; i < all.size(); ++i) {
    const auto gap = all[i].detection.frame_index - all[i - 1].detection.frame_index;
    if (gap > max_frame_gap)
      throw ParseError(std::max(all[i].line_no, all[i - 1].line_no), "frame",
                       "gap of " + std::to_string(gap) + " frames exceeds the limit of " +
                           std::to_string(max_frame_gap));
  }
  const std::uint64_t first = all.front().detection.frame_index;
  const std::uint64_t last = all.back().detection.frame_index;
  out.reserve(static_cast<std::size_t>(last - first + 1));
  for (std::uint64_t f = first; f <= last; ++f) out.push_back({f, {}});
  for (auto& d : all)
    out[static_cast<std::size_t>(d.detection.frame_index - first)].detections.push_back(
        std::move(d.detection));
  return out;
}

}  // namespace detail

// Reads the whole stream. Out-of-order records are regrouped by frame.
inline std::vector<FrameDetections> parse_detection_stream(std::istream& in) {
  std::vector<detail::NumberedDetection> all;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    all.push_back({parse_detection_record(line, line_no), line_no});
  }
  return detail::group_frames(std::move(all));
}

inline std::vector<FrameDetections> parse_detection_stream(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_detection_stream(in);
}

// Incremental reader for streams already grouped in non-decreasing frame
// order. Memory use is one frame. Gaps between observed frames come out as
// empty frames; a frame index that goes backwards is a positioned error.
class DetectionStreamReader {
 public:
  explicit DetectionStreamReader(std::istream& in) : in_(in) {}

  std::optional<FrameDetections> next() {
    if (pending_gap_ && *pending_gap_ < pending_->frame_index) {
      FrameDetections empty{(*pending_gap_)++, {}};
      return empty;
    }
    pending_gap_.reset();
    if (done_ && !pending_) return std::nullopt;

    FrameDetections frame;
    if (pending_) {
      frame.frame_index = pending_->frame_index;
      frame.detections.push_back(std::move(*pending_));
      pending_.reset();
    }
    std::string line;
    while (!done_) {
      if (!std::getline(in_, line)) {
        done_ = true;
        break;
      }
      ++line_no_;
      if (detail::is_blank(line)) continue;
      Detection d = parse_detection_record(line, line_no_);
      if (frame.detections.empty()) {
        if (last_emitted_ && d.frame_index <= *last_emitted_)
          throw ParseError(line_no_, "frame", "frame index goes backwards");
        frame.frame_index = d.frame_index;
        frame.detections.push_back(std::move(d));
        continue;
      }
      if (d.frame_index == frame.frame_index) {
        frame.detections.push_back(std::move(d));
        continue;
      }
      if (d.frame_index < frame.frame_index)
        throw ParseError(line_no_, "frame", "frame index goes backwards");
      if (d.frame_index - frame.frame_index > max_frame_gap)
        throw ParseError(line_no_, "frame", "gap exceeds the limit of " +
                                                std::to_string(max_frame_gap) + " frames");
      if (d.frame_index > frame.frame_index + 1) pending_gap_ = frame.frame_index + 1;
      pending_ = std::move(d);
      break;
    }
    if (frame.detections.empty()) return std::nullopt;
    last_emitted_ = frame.frame_index;
    return frame;
  }

  std::size_t line_number() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
  bool done_ = false;
  std::optional<Detection> pending_;
  std::optional<std::uint64_t> pending_gap_;
  std::optional<std::uint64_t> last_emitted_;
};

// ---------------------------------------------------------------------------
// Event stream: one JSON object per line,
//   {"kind":"inactivity","frame_start":3,"frame_end":60,"track_ids":[7],"value":4.25}
// ---------------------------------------------------------------------------

inline std::string format_event_record(const AnomalyEvent& e) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(e.kind));
  j["frame_start"] = e.frame_start;
  j["frame_end"] = e.frame_end;
  auto ids = nlohmann::ordered_json::array();
  for (const auto& id : e.track_ids) ids.push_back(id.value);
  j["track_ids"] = ids;
  j["value"] = e.value;
  return j.dump();
}

inline std::string serialize_events(std::span<const AnomalyEvent> events) {
  std::string out;
  for (const auto& e : events) {
    out += format_event_record(e);
    out += '\n';
  }
  return out;
}

inline AnomalyEvent parse_event_record(std::string_view line, std::size_t line_no = 0) {
  static constexpr std::string_view known[] = {"kind", "frame_start", "frame_end", "track_ids",
                                               "value"};
  const auto j = detail::parse_json_line(line, line_no);
  for (const auto& [key, value] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ParseError(line_no, key, "unknown field");

  AnomalyEvent e;
  auto kind = j.find("kind");
  if (kind == j.end()) throw ParseError(line_no, "kind", "missing field");
  if (*kind == "huddling")
    e.kind = EventKind::huddling;
  else if (*kind == "inactivity")
    e.kind = EventKind::inactivity;
  else
    throw ParseError(line_no, "kind", "expected \"huddling\" or \"inactivity\"");

  e.frame_start = detail::json_index(j, "frame_start", line_no);
  e.frame_end = detail::json_index(j, "frame_end", line_no);
  if (e.frame_end < e.frame_start)
    throw ParseError(line_no, "frame_end", "precedes frame_start");

  auto ids = j.find("track_ids");
  if (ids == j.end()) throw ParseError(line_no, "track_ids", "missing field");
  if (!ids->is_array()) throw ParseError(line_no, "track_ids", "expected an array");
  for (const auto& id : *ids) {
    if (!id.is_number_unsigned())
      throw ParseError(line_no, "track_ids", "expected non-negative integers");
    e.track_ids.push_back(TrackId{id.get<std::uint64_t>()});
  }
  if (!std::is_sorted(e.track_ids.begin(), e.track_ids.end()) ||
      std::adjacent_find(e.track_ids.begin(), e.track_ids.end()) != e.track_ids.end())
    throw ParseError(line_no, "track_ids", "must be strictly ascending");
  if (e.kind == EventKind::inactivity && e.track_ids.size() != 1)
    throw ParseError(line_no, "track_ids", "inactivity events carry exactly one track id");

  e.value = detail::json_real(j, "value", line_no);
  return e;
}

inline std::vector<AnomalyEvent> parse_events(std::istream& in) {
  std::vector<AnomalyEvent> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    out.push_back(parse_event_record(line, line_no));
  }
  return out;
}

inline std::vector<AnomalyEvent> parse_events(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_events(in);
}

// ---------------------------------------------------------------------------
// LabelImg / Pascal VOC annotations. Only object/name and object/bndbox are
// read; other elements are ignored.
// ---------------------------------------------------------------------------

struct LabeledBox {
  std::string label;
  BoundingBox bbox;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

struct GroundTruthFrame {
  std::string identifier;  // <filename> when present
  std::vector<LabeledBox> objects;
};

inline GroundTruthFrame parse_voc_annotation(const std::string& document) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(document);
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(e.line(), "", "malformed XML: " + e.message());
  } catch (const pt::ptree_error& e) {
    throw ParseError(0, "", std::string("malformed XML: ") + e.what());
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw ParseError(0, "annotation", "missing root element");

  auto coordinate = [](const pt::ptree& box, const char* name) {
    const auto node = box.get_child_optional(name);
    if (!node) throw ParseError(0, name, "missing element");
    double v = 0.0;
    if (!detail::parse_number(node->data(), v) || !std::isfinite(v))
      throw ParseError(0, name, "expected a number, got '" + node->data() + "'");
    return v;
  };

  GroundTruthFrame frame;
  if (auto f = root->get_child_optional("filename")) frame.identifier = detail::trim(f->data());
  for (const auto& [tag, object] : *root) {
    if (tag != "object") continue;
    const auto name = object.get_child_optional("name");
    if (!name) throw ParseError(0, "name", "object without a name element");
    const auto box = object.get_child_optional("bndbox");
    if (!box) throw ParseError(0, "bndbox", "object without a bndbox element");
    const double xmin = coordinate(*box, "xmin");
    const double ymin = coordinate(*box, "ymin");
    const double xmax = coordinate(*box, "xmax");
    const double ymax = coordinate(*box, "ymax");
    if (!(xmax > xmin)) throw ParseError(0, "xmax", "degenerate box: xmax <= xmin");
    if (!(ymax > ymin)) throw ParseError(0, "ymax", "degenerate box: ymax <= ymin");
    frame.objects.push_back(
        {std::string(detail::trim(name->data())), {xmin, ymin, xmax - xmin, ymax - ymin}});
  }
  return frame;
}

// Trailing decimal digits of a file stem, e.g. "frame_000123.jpg" -> 123.
inline std::optional<std::uint64_t> frame_number_from_name(std::string_view name) {
  std::string stem = std::filesystem::path(std::string(name)).stem().string();
  std::size_t end = stem.size();
  std::size_t begin = end;
  while (begin > 0 && stem[begin - 1] >= '0' && stem[begin - 1] <= '9') --begin;
  if (begin == end) return std::nullopt;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(stem.data() + begin, stem.data() + end, v);
  if (ec != std::errc{}) return std::nullopt;
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temporary file and renames it into place, so `path`
// either holds the complete content or is left untouched.
template <typename Writer>
void write_file_atomically(const std::filesystem::path& path, Writer&& writer) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    try {
      writer(out);
      out.flush();
      if (!out) throw Error("write failed for " + tmp.string());
    } catch (...) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace flockwatch
