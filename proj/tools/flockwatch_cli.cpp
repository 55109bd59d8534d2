// flockwatch: analyze detection streams for huddling and inactivity, score
// results against ground truth, and synthesize test scenarios.
//
// Exit status: 0 success, 1 input or parse error, 2 configuration or usage
// error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "flockwatch/config.hpp"
#include "flockwatch/io.hpp"
#include "flockwatch/metrics.hpp"
#include "flockwatch/pipeline.hpp"
#include "flockwatch/synth.hpp"

namespace fs = std::filesystem;
using namespace flockwatch;

namespace {

constexpr int kInputError = 1;
constexpr int kConfigError = 2;

PipelineConfig read_config(const std::string& path) {
  if (path.empty()) return {};
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError("", e.what());
  }
  return load_config(text);
}

std::vector<FrameDetections> read_detections(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return parse_detection_stream(in);
}

std::vector<AnomalyEvent> read_events(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return parse_events(in);
}

int run_evaluate(const std::string& mode, const fs::path& input, const fs::path& truth_path,
                 const PipelineConfig& config, const std::string& format,
                 const std::string& output) {
  const bool truth_is_voc = fs::is_directory(truth_path);
  const auto input_kind = sniff_stream(input);
  const auto truth_kind = truth_is_voc ? StreamKind::detections : sniff_stream(truth_path);

  std::string resolved = mode;
  if (resolved.empty() || resolved == "auto") {
    if (input_kind != StreamKind::empty && truth_kind != StreamKind::empty &&
        input_kind != truth_kind)
      throw ParseError(0, "", "prediction and ground-truth files hold different record kinds");
    const auto k = input_kind != StreamKind::empty ? input_kind : truth_kind;
    resolved = k == StreamKind::detections ? "detections" : "events";
  }
  const auto expected = resolved == "detections" ? StreamKind::detections : StreamKind::events;
  auto check = [&](StreamKind k, const char* what) {
    if (k != StreamKind::empty && k != expected)
      throw ParseError(0, "", std::string(what) + " is " +
                                  (k == StreamKind::events ? "an event" : "a detection") +
                                  " stream but --mode is " + resolved);
  };
  check(input_kind, "prediction file");
  check(truth_kind, "ground-truth input");

  EvalReport report;
  if (resolved == "detections") {
    const auto truth = truth_is_voc ? read_voc_directory(truth_path) : read_detections(truth_path);
    report = evaluate_detections(read_detections(input), truth, config.iou_threshold);
  } else {
    report = evaluate_events(read_events(input), read_events(truth_path));
  }

  const auto machine = to_json(report).dump(2) + "\n";
  if (format == "machine")
    std::cout << machine;
  else
    std::cout << render_text(report);
  if (!output.empty())
    write_file_atomically(output, [&](std::ostream& out) { out << machine; });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Huddling and inactivity detection over per-frame detection streams"};
  app.require_subcommand(1);

  std::string config_path;
  std::string input;
  std::string output;
  std::string format = "text";

  auto* analyze = app.add_subcommand("analyze", "Track birds and emit anomaly events");
  analyze->add_option("--input", input, "Detection stream (JSON lines)")->required();
  analyze->add_option("--output", output, "Event stream to write (JSON lines)")->required();
  analyze->add_option("--config", config_path,
                      "Key = value config (defaults: radius 100, count_threshold 10, "
                      "window_frames 50, activity_threshold 20, max_disappeared 50)");
  analyze->add_option("--format", format, "Summary format on stdout")
      ->check(CLI::IsMember({"text", "machine"}));

  std::string truth;
  std::string mode = "auto";
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--input", input, "Predicted events or detections")->required();
  evaluate->add_option("--truth", truth,
                       "Ground-truth events, detections, or a directory of VOC XML files")
      ->required();
  evaluate->add_option("--mode", mode, "events, detections, or auto (default)")
      ->check(CLI::IsMember({"auto", "events", "detections"}));
  evaluate->add_option("--config", config_path, "Config providing iou_threshold (default 0.5)");
  evaluate->add_option("--output", output, "Machine-readable report file");
  evaluate->add_option("--format", format, "Report format on stdout (default text)")
      ->check(CLI::IsMember({"text", "machine"}));

  std::string truth_boxes;
  auto* synthesize = app.add_subcommand("synthesize", "Generate a seeded synthetic scenario");
  synthesize->add_option("--config", config_path, "Scenario spec (key = value)")->required();
  synthesize->add_option("--output", output, "Detection stream to write")->required();
  synthesize->add_option("--truth", truth, "Ground-truth event stream to write")->required();
  synthesize->add_option("--truth-boxes", truth_boxes, "Ground-truth boxes to write (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage mistakes share the configuration status; --help exits 0.
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (analyze->parsed()) {
      const auto config = read_config(config_path);
      const auto s = run_analyze(input, config, output);
      if (format == "machine")
        std::cout << nlohmann::json{{"frames", s.frames}, {"events", s.events}}.dump() << "\n";
      else
        std::cout << "processed " << s.frames << " frames, wrote " << s.events << " events to "
                  << output << "\n";
      return 0;
    }
    if (evaluate->parsed())
      return run_evaluate(mode, input, truth, read_config(config_path), format, output);
    if (synthesize->parsed()) {
      ScenarioSpec spec;
      try {
        spec = load_scenario(read_file(config_path));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError("", e.what());
      }
      std::optional<fs::path> boxes;
      if (!truth_boxes.empty()) boxes = truth_boxes;
      run_synthesize(spec, output, truth, boxes);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return 0;
}
