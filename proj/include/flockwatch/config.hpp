#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

#include "flockwatch/activity.hpp"
#include "flockwatch/error.hpp"
#include "flockwatch/huddling.hpp"
#include "flockwatch/tracker.hpp"

namespace flockwatch {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Locale-independent full-string number parse.
template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    if (s.front() == '+') s.remove_prefix(1);
  }
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace detail

// Flat "key = value" document. Blank lines and text after '#' are ignored.
// Typed getters record which keys were read so leftovers can be rejected.
class KeyValueDocument {
 public:
  static KeyValueDocument parse(std::string_view text) {
    KeyValueDocument doc;
    std::size_t line_no = 0;
    while (!text.empty()) {
      ++line_no;
      const auto nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      if (const auto hash = line.find('#'); hash != std::string_view::npos)
        line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("", "line " + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      const std::string value(detail::trim(line.substr(eq + 1)));
      if (key.empty())
        throw ConfigError("", "line " + std::to_string(line_no) + ": missing key");
      if (!doc.values_.emplace(key, value).second) throw ConfigError(key, "duplicate key");
    }
    return doc;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  std::string get_string(const std::string& key, std::string fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    const auto& v = it->second;
    if (v == "inf" || v == "unbounded") return std::numeric_limits<double>::infinity();
    double out = 0.0;
    if (!detail::parse_number(v, out) || std::isnan(out))
      throw ConfigError(key, "expected a number, got '" + v + "'");
    return out;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    std::int64_t out = 0;
    if (!detail::parse_number(it->second, out))
      throw ConfigError(key, "expected an integer, got '" + it->second + "'");
    return out;
  }

  // Integer that must be at least `minimum`.
  std::uint64_t get_count(const std::string& key, std::uint64_t fallback, std::int64_t minimum) {
    const auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < minimum)
      throw ConfigError(key, "must be at least " + std::to_string(minimum));
    return static_cast<std::uint64_t>(v);
  }

  void mark_used(const std::string& key) { used_.insert(key); }

  // Throws on the first key no getter asked for.
  void reject_unknown() const {
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) throw ConfigError(k, "unknown key");
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

struct PipelineConfig {
  TrackerConfig tracker;
  HuddleConfig huddle;
  ActivityConfig activity;
  double iou_threshold = 0.5;

  void validate() const {
    tracker.validate();
    huddle.validate();
    activity.validate();
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
      throw InvalidArgument("iou_threshold must lie in (0, 1]");
  }
};

namespace detail {

// Reads the pipeline keys out of `doc`, leaving other keys untouched.
inline PipelineConfig read_pipeline_keys(KeyValueDocument& doc) {
  PipelineConfig c;
  c.tracker.max_disappeared = doc.get_count("max_disappeared", c.tracker.max_disappeared, 1);
  c.tracker.max_distance = doc.get_double("max_distance", c.tracker.max_distance);
  if (!(c.tracker.max_distance > 0.0)) throw ConfigError("max_distance", "must be positive");

  c.huddle.radius = doc.get_double("radius", c.huddle.radius);
  if (!(c.huddle.radius > 0.0) || !std::isfinite(c.huddle.radius))
    throw ConfigError("radius", "must be a positive finite number");
  c.huddle.count_threshold = doc.get_count("count_threshold", c.huddle.count_threshold, 1);

  c.activity.window_frames = doc.get_count("window_frames", c.activity.window_frames, 1);
  c.activity.activity_threshold =
      doc.get_double("activity_threshold", c.activity.activity_threshold);
  if (!(c.activity.activity_threshold > 0.0) || !std::isfinite(c.activity.activity_threshold))
    throw ConfigError("activity_threshold", "must be a positive finite number");

  c.iou_threshold = doc.get_double("iou_threshold", c.iou_threshold);
  if (!(c.iou_threshold > 0.0 && c.iou_threshold <= 1.0))
    throw ConfigError("iou_threshold", "must lie in (0, 1]");
  return c;
}

}  // namespace detail

namespace detail {

inline std::string format_real(double v) {
  if (std::isinf(v)) return "unbounded";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Inverse of load_config: every key spelled out, shortest round-trip reals.
inline std::string format_config(const PipelineConfig& c) {
  std::string out;
  auto line = [&out](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  line("max_disappeared", std::to_string(c.tracker.max_disappeared));
  line("max_distance", detail::format_real(c.tracker.max_distance));
  line("radius", detail::format_real(c.huddle.radius));
  line("count_threshold", std::to_string(c.huddle.count_threshold));
  line("window_frames", std::to_string(c.activity.window_frames));
  line("activity_threshold", detail::format_real(c.activity.activity_threshold));
  line("iou_threshold", detail::format_real(c.iou_threshold));
  return out;
}

// Keys: max_disappeared, max_distance ("unbounded" or "inf" allowed), radius,
// count_threshold, window_frames, activity_threshold, iou_threshold.
inline PipelineConfig load_config(std::string_view text) {
  auto doc = KeyValueDocument::parse(text);
  auto c = detail::read_pipeline_keys(doc);
  doc.reject_unknown();
  return c;
}

}  // namespace flockwatch
