#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "reefdeploy/classify.hpp"
#include "reefdeploy/core.hpp"
#include "reefdeploy/decision.hpp"

namespace reefdeploy {

// Time source for the streaming harness. Production runs on the wall clock;
// tests drive a virtual clock so timing behavior is exact and instant.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::nanoseconds now() = 0;
  virtual void sleep_until(std::chrono::nanoseconds t) = 0;
  void sleep_for(std::chrono::nanoseconds d) { sleep_until(now() + d); }
};

class WallClock : public Clock {
 public:
  WallClock() : base_(std::chrono::steady_clock::now()) {}

  std::chrono::nanoseconds now() override {
    return std::chrono::steady_clock::now() - base_;
  }

  void sleep_until(std::chrono::nanoseconds t) override {
    std::this_thread::sleep_until(base_ + t);
  }

 private:
  std::chrono::steady_clock::time_point base_;
};

class VirtualClock : public Clock {
 public:
  std::chrono::nanoseconds now() override { return t_; }

  void sleep_until(std::chrono::nanoseconds t) override { t_ = std::max(t_, t); }

 private:
  std::chrono::nanoseconds t_{0};
};

// What happens when a frame arrives while the pipeline is still busy.
// LatestWins discards everything already queued in favor of the newcomer;
// ProcessAll queues every frame (bounded by queue_capacity, which then
// back-pressures arrivals).
enum class DropPolicy { LatestWins, ProcessAll };

inline std::string to_string(DropPolicy p) {
  return p == DropPolicy::LatestWins ? "latest_wins" : "process_all";
}

inline DropPolicy drop_policy_from_string(const std::string& s) {
  if (s == "latest_wins") return DropPolicy::LatestWins;
  if (s == "process_all") return DropPolicy::ProcessAll;
  throw std::invalid_argument("unknown drop policy '" + s + "'");
}

struct StreamConfig {
  double capture_fps = 10.0;
  GridSpec grid{};
  DropPolicy drop_policy = DropPolicy::LatestWins;
  std::size_t queue_capacity = 8;
  // Stop offering frames after this many (all source frames otherwise).
  std::optional<std::uint64_t> frame_budget;
  // Stop offering frames at this stream time.
  std::optional<std::chrono::nanoseconds> duration;
};

inline void validate(const StreamConfig& cfg) {
  if (!(cfg.capture_fps > 0.0) || !std::isfinite(cfg.capture_fps)) {
    throw std::invalid_argument("capture_fps must be positive");
  }
  if (cfg.queue_capacity < 1) throw std::invalid_argument("queue_capacity must be at least 1");
}

struct TimingStats {
  std::uint64_t frames_offered = 0;
  std::uint64_t frames_processed = 0;
  std::uint64_t frames_dropped = 0;
  // Classification + decision time per processed frame.
  std::vector<double> process_ms;
  // Arrival to decision completion per processed frame.
  std::vector<double> latency_ms;
  double elapsed_s = 0.0;
  double achieved_fps = 0.0;
};

struct StreamResult {
  std::vector<FrameDecision> decisions;
  TimingStats stats;
  // Set when the backend aborted the stream; stats remain valid and
  // conservation still holds (undrained frames count as dropped).
  std::optional<std::string> error;
};

// Pull source for the harness; returns nothing when exhausted.
using FrameSource = std::function<std::optional<FrameRecord>()>;

inline FrameSource manifest_source(const DatasetManifest& manifest) {
  auto index = std::make_shared<std::size_t>(0);
  return [&manifest, index]() -> std::optional<FrameRecord> {
    if (*index >= manifest.records().size()) return std::nullopt;
    return manifest.records()[(*index)++];
  };
}

// Event-driven replay of a capture stream against the decision pipeline.
// Frames arrive at the configured capture rate; each arrival due before the
// pipeline frees up is queued or dropped per the drop policy. Single
// threaded: arrival k's instant is k / capture_fps, and processing occupies
// the interval its clock time says it does, so the schedule is equivalent
// to a capture thread feeding a worker thread through a queue.
inline StreamResult run_stream(
    const FrameSource& source, const ClassifierBackend& backend, const DecisionConfig& decision,
    const StreamConfig& config, Clock& clock,
    const std::function<void(const FrameDecision&, const FrameRecord&)>& on_decision = {}) {
  validate(config);

  StreamResult result;
  TimingStats& stats = result.stats;
  const GridSpec grid = config.grid;
  const std::chrono::nanoseconds start = clock.now();
  const double interval_ns = 1e9 / config.capture_fps;

  std::deque<std::pair<FrameRecord, std::chrono::nanoseconds>> queue;
  std::uint64_t k = 0;
  std::optional<FrameRecord> next = source();

  auto arrival_of = [&](std::uint64_t index) {
    return start + std::chrono::nanoseconds(static_cast<std::int64_t>(
                       std::llround(static_cast<double>(index) * interval_ns)));
  };
  auto within_budget = [&](std::uint64_t index) {
    if (config.frame_budget && index >= *config.frame_budget) return false;
    if (config.duration && arrival_of(index) - start >= *config.duration) return false;
    return true;
  };

  if (next && !within_budget(0)) next.reset();

  while (next || !queue.empty()) {
    if (next) {
      const std::chrono::nanoseconds arrival = arrival_of(k);
      if (queue.empty()) clock.sleep_until(arrival);
      if (clock.now() >= arrival) {
        const bool full = queue.size() >= config.queue_capacity;
        if (config.drop_policy == DropPolicy::LatestWins) {
          stats.frames_dropped += queue.size();
          queue.clear();
          queue.emplace_back(std::move(*next), arrival);
        } else if (full) {
          // Bounded queue pushes back on the capture side: the arrival
          // stays pending until processing frees a slot.
          goto process;
        } else {
          queue.emplace_back(std::move(*next), arrival);
        }
        ++stats.frames_offered;
        ++k;
        next = source();
        if (next && !within_budget(k)) next.reset();
        continue;
      }
    }
  process:
    auto [frame, arrival] = std::move(queue.front());
    queue.pop_front();
    const std::chrono::nanoseconds t0 = clock.now();
    FrameDecision fd;
    try {
      if (decision.rule == DecisionRule::WholeImage) {
        fd = decide(classify_frame(backend, frame), decision);
      } else {
        fd = decide(classify_patches(backend, frame, grid), decision);
      }
    } catch (const std::exception& e) {
      stats.frames_dropped += 1 + queue.size();
      result.error = "frame '" + frame.frame_id + "': " + e.what();
      break;
    }
    const std::chrono::nanoseconds t1 = clock.now();
    stats.process_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    stats.latency_ms.push_back(std::chrono::duration<double, std::milli>(t1 - arrival).count());
    ++stats.frames_processed;
    result.decisions.push_back(fd);
    if (on_decision) on_decision(fd, frame);
  }

  stats.elapsed_s = std::chrono::duration<double>(clock.now() - start).count();
  stats.achieved_fps =
      stats.elapsed_s > 0.0 ? static_cast<double>(stats.frames_processed) / stats.elapsed_s : 0.0;
  return result;
}

// Nearest-rank percentile; q in (0, 1].
inline double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of no samples");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank must be in (0,1]");
  std::sort(samples.begin(), samples.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

struct StreamSummary {
  std::uint64_t offered = 0;
  std::uint64_t processed = 0;
  std::uint64_t dropped = 0;
  double elapsed_s = 0.0;
  double achieved_fps = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
  double latency_max_ms = 0.0;
  double process_p50_ms = 0.0;
  double process_p95_ms = 0.0;
  double process_max_ms = 0.0;
};

inline StreamSummary summarize(const TimingStats& stats) {
  StreamSummary s;
  s.offered = stats.frames_offered;
  s.processed = stats.frames_processed;
  s.dropped = stats.frames_dropped;
  s.elapsed_s = stats.elapsed_s;
  s.achieved_fps = stats.achieved_fps;
  if (!stats.latency_ms.empty()) {
    s.latency_p50_ms = percentile(stats.latency_ms, 0.50);
    s.latency_p95_ms = percentile(stats.latency_ms, 0.95);
    s.latency_max_ms = *std::max_element(stats.latency_ms.begin(), stats.latency_ms.end());
    s.process_p50_ms = percentile(stats.process_ms, 0.50);
    s.process_p95_ms = percentile(stats.process_ms, 0.95);
    s.process_max_ms = *std::max_element(stats.process_ms.begin(), stats.process_ms.end());
  }
  return s;
}

inline json summary_to_json(const StreamSummary& s) {
  return json{{"frames_offered", s.offered},
              {"frames_processed", s.processed},
              {"frames_dropped", s.dropped},
              {"elapsed_s", s.elapsed_s},
              {"achieved_fps", s.achieved_fps},
              {"latency_p50_ms", s.latency_p50_ms},
              {"latency_p95_ms", s.latency_p95_ms},
              {"latency_max_ms", s.latency_max_ms},
              {"process_p50_ms", s.process_p50_ms},
              {"process_p95_ms", s.process_p95_ms},
              {"process_max_ms", s.process_max_ms}};
}

inline std::string format_summary(const StreamSummary& s) {
  std::ostringstream os;
  os << "frames offered/processed/dropped: " << s.offered << "/" << s.processed << "/" << s.dropped
     << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "elapsed: %.3f s, achieved fps: %.2f\n", s.elapsed_s,
                s.achieved_fps);
  os << buf;
  std::snprintf(buf, sizeof(buf), "latency p50/p95/max: %.2f/%.2f/%.2f ms\n", s.latency_p50_ms,
                s.latency_p95_ms, s.latency_max_ms);
  os << buf;
  std::snprintf(buf, sizeof(buf), "processing p50/p95/max: %.2f/%.2f/%.2f ms\n", s.process_p50_ms,
                s.process_p95_ms, s.process_max_ms);
  os << buf;
  return os.str();
}

// Adds a fixed classification delay on the stream clock, to emulate a model
// with known inference cost.
class DelayedBackend : public ClassifierBackend {
 public:
  DelayedBackend(const ClassifierBackend& inner, Clock& clock, std::chrono::nanoseconds delay)
      : inner_(inner), clock_(clock), delay_(delay) {}

  std::string name() const override { return inner_.name() + "+delay"; }
  bool supports_patches() const override { return inner_.supports_patches(); }
  bool supports_frames() const override { return inner_.supports_frames(); }

  ClassDistribution classify_patch(const FrameRecord& frame, int patch_index) const override {
    return inner_.classify_patch(frame, patch_index);
  }

  std::vector<ClassDistribution> classify_grid(const FrameRecord& frame,
                                               const GridSpec& grid) const override {
    clock_.sleep_for(delay_);
    return inner_.classify_grid(frame, grid);
  }

  double frame_deploy_prob(const FrameRecord& frame) const override {
    clock_.sleep_for(delay_);
    return inner_.frame_deploy_prob(frame);
  }

 private:
  const ClassifierBackend& inner_;
  Clock& clock_;
  std::chrono::nanoseconds delay_;
};

}  // namespace reefdeploy
