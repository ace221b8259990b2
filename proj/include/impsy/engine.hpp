#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impsy/config.hpp"
#include "impsy/mapping.hpp"
#include "impsy/mdrnn.hpp"
#include "impsy/midi.hpp"
#include "impsy/session_log.hpp"

namespace impsy {

enum class Lead { human, ai };

const char* to_string(Lead lead);

/// Side effects of the engine, delivered synchronously from the engine thread.
/// Implementations must not block (queue and return).
class EngineObserver {
 public:
  virtual ~EngineObserver() = default;
  virtual void on_record(const LogRecord&) {}
  virtual void on_frame(const ContinuousFrame& /*frame*/, Source, double /*at*/) {}
  virtual void on_lead_change(Lead, double /*at*/) {}
  virtual void on_error(const std::string&) {}
};

/// Maps the engine's monotonic seconds onto wall-clock time for log records.
struct TimeBase {
  double monotonic = 0.0;
  WallTime wall{};
};

struct EngineOptions {
  // Frames generated ahead of time while the AI leads.
  int lookahead_frames = 1;
  // Upper bound on frames generated within a single tick (dt = 0 runs).
  int max_frames_per_tick = 64;
};

struct EngineCounters {
  std::uint64_t human_events = 0;
  std::uint64_t ai_frames_generated = 0;
  std::uint64_t ai_frames_emitted = 0;
  std::uint64_t ai_frames_cancelled = 0;
  std::uint64_t messages_emitted = 0;
  std::uint64_t generation_failures = 0;
};

/// The call-and-response loop. Single owner; not thread-safe. Time is passed
/// in explicitly so scripted traces are reproducible.
///
/// Model timeline: every human event feeds the composite frame into the
/// network, and every AI frame is fed back once generated (self-conditioning).
/// Frames cancelled by a human event are rolled back out of the model state.
class Engine {
 public:
  Engine(EngineConfig config, std::shared_ptr<const MdrnnParams> model, double start,
         TimeBase time_base = {}, EngineObserver* observer = nullptr, EngineOptions options = {});

  /// A routed human input. Updates the composite frame, conditions the model,
  /// logs a human record and, unless in ai_only mode, cancels pending AI
  /// frames and hands the lead to the human.
  void on_human_event(int dim, double value, double at);

  /// Advances the state machine to now and returns every message due.
  std::vector<TimedMidi> tick(double now);

  /// Takes effect immediately; call between ticks.
  void apply_config(const EngineConfig& config);
  /// Swaps the network and resets its state.
  void swap_model(std::shared_ptr<const MdrnnParams> model);

  Lead lead() const { return lead_; }
  double last_human_at() const { return last_human_at_; }
  std::size_t pending_frames() const { return pending_.size(); }
  std::size_t pending_messages() const;
  const ContinuousFrame& composite() const { return composite_; }
  const EngineConfig& config() const { return config_; }
  const std::shared_ptr<const MdrnnParams>& model() const { return model_; }
  const EngineCounters& counters() const { return counters_; }
  /// Emitted AI frames with their due times, oldest first (bounded history).
  const std::deque<std::pair<double, ContinuousFrame>>& emitted_history() const {
    return emitted_history_;
  }

  WallTime wall_time(double monotonic) const;

 private:
  struct ModelSnapshot {
    MdrnnState state;
    MixtureParams next;
    double last_frame_at;
  };

  struct PendingFrame {
    double due;
    ContinuousFrame frame;
    ModelSnapshot before;
  };

  struct Gate {
    double due;
    std::size_t route;
    MidiMessage off;
  };

  void reset_model();
  void set_lead(Lead lead, double at);
  void generate(double now);
  void emit_frame(const PendingFrame& frame, std::vector<TimedMidi>& out);
  void cancel_pending();
  void log(Source source, double at, const std::vector<double>& values);

  EngineConfig config_;
  std::shared_ptr<const MdrnnParams> model_;
  TimeBase time_base_;
  EngineObserver* observer_;
  EngineOptions options_;
  Rng rng_;

  Lead lead_ = Lead::human;
  double last_human_at_;
  double last_frame_at_;
  std::optional<double> ai_cursor_;  // due time of the last AI frame in the current run
  ContinuousFrame composite_;
  MdrnnState state_;
  MixtureParams next_mix_;

  std::deque<PendingFrame> pending_;
  std::vector<Gate> gates_;
  std::vector<std::optional<int>> sounding_;  // per output route, active AI note
  OutboundRouter outbound_;
  EngineCounters counters_;
  std::deque<std::pair<double, ContinuousFrame>> emitted_history_;
};

}  // namespace impsy
