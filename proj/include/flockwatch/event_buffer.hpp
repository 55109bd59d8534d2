#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flockwatch/error.hpp"
#include "flockwatch/events.hpp"
#include "flockwatch/io.hpp"

namespace flockwatch {

// Holds finished events until they may be emitted in event_order. At most
// memory_limit events stay in memory; beyond that the buffer is written out
// as a sorted run to an anonymous temporary file, and runs are merged back on
// emission. Once more than max_runs runs exist they are compacted into one,
// so memory is bounded no matter how long emission stays blocked.
class OrderedEventBuffer {
 public:
  explicit OrderedEventBuffer(std::size_t memory_limit = 4096, std::size_t max_runs = 16)
      : limit_(std::max<std::size_t>(memory_limit, 1)), max_runs_(std::max<std::size_t>(max_runs, 2)) {}

  void insert(AnomalyEvent e) {
    mem_.insert(std::move(e));
    if (mem_.size() > limit_) spill();
  }

  // Emits, in order, every held event with frame_start < bound.
  template <typename Sink>
  void emit_before(std::uint64_t bound, Sink&& sink) {
    drain(bound, sink);
  }

  template <typename Sink>
  void emit_all(Sink&& sink) {
    drain(std::nullopt, sink);
  }

  std::size_t in_memory() const noexcept { return mem_.size(); }
  std::size_t runs() const noexcept { return runs_.size(); }
  bool empty() const noexcept { return mem_.empty() && runs_.empty(); }

 private:
  struct Less {
    bool operator()(const AnomalyEvent& a, const AnomalyEvent& b) const { return event_order(a, b); }
  };

  struct Run {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> file{nullptr, &std::fclose};
    std::optional<AnomalyEvent> head;

    void advance() {
      head.reset();
      std::string line;
      int c = 0;
      while ((c = std::fgetc(file.get())) != EOF && c != '\n') line.push_back(static_cast<char>(c));
      if (!line.empty()) head = parse_event_record(line);
    }
  };

  static std::unique_ptr<std::FILE, int (*)(std::FILE*)> open_temp() {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::tmpfile(), &std::fclose);
    if (!f) throw Error("cannot create a temporary file for buffered events");
    return f;
  }

  static void put(std::FILE* f, const AnomalyEvent& e) {
    const auto line = format_event_record(e) + '\n';
    if (std::fwrite(line.data(), 1, line.size(), f) != line.size())
      throw Error("cannot write buffered events to a temporary file");
  }

  static Run finish_run(std::unique_ptr<std::FILE, int (*)(std::FILE*)> f) {
    if (std::fflush(f.get()) != 0) throw Error("cannot write buffered events to a temporary file");
    std::rewind(f.get());
    Run r;
    r.file = std::move(f);
    r.advance();
    return r;
  }

  void spill() {
    auto f = open_temp();
    for (const auto& e : mem_) put(f.get(), e);
    mem_.clear();
    runs_.push_back(finish_run(std::move(f)));
    if (runs_.size() > max_runs_) compact();
  }

  // Merges every run into a single one.
  void compact() {
    auto f = open_temp();
    for (;;) {
      Run* best = nullptr;
      for (auto& r : runs_)
        if (r.head && (!best || event_order(*r.head, *best->head))) best = &r;
      if (!best) break;
      put(f.get(), *best->head);
      best->advance();
    }
    runs_.clear();
    runs_.push_back(finish_run(std::move(f)));
  }

  template <typename Sink>
  void drain(std::optional<std::uint64_t> bound, Sink& sink) {
    for (;;) {
      Run* from = nullptr;
      const AnomalyEvent* best = mem_.empty() ? nullptr : &*mem_.begin();
      for (auto& r : runs_)
        if (r.head && (!best || event_order(*r.head, *best))) {
          best = &*r.head;
          from = &r;
        }
      if (!best || (bound && best->frame_start >= *bound)) break;
      sink(*best);
      if (from) {
        from->advance();
      } else {
        mem_.erase(mem_.begin());
      }
    }
    std::erase_if(runs_, [](const Run& r) { return !r.head; });
  }

  std::size_t limit_;
  std::size_t max_runs_;
  std::multiset<AnomalyEvent, Less> mem_;
  std::vector<Run> runs_;
};

}  // namespace flockwatch
