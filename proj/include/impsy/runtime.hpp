#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "impsy/config.hpp"
#include "impsy/engine.hpp"
#include "impsy/mapping.hpp"
#include "impsy/midi_device.hpp"
#include "impsy/netio.hpp"
#include "impsy/session_log.hpp"

namespace impsy {

struct RuntimeOptions {
  // Relative log_dir and model paths resolve against this directory.
  std::filesystem::path base_dir;
  std::size_t ingest_capacity = 1024;
  std::size_t log_capacity = 8192;
  std::size_t net_capacity = 1024;
  bool logging = true;
  // Wall-clock time matching the clock's start; system time when unset.
  std::optional<WallTime> wall_origin;
  EngineOptions engine;
};

struct StatusSnapshot {
  bool running = false;
  Lead lead = Lead::human;
  int dimension = 1;
  std::string mode = "call_and_response";
  double switchover_s = 0.0;
  std::string model_file;
  double uptime_s = 0.0;
  // Events within the last second of engine time.
  std::uint64_t human_events_1s = 0;
  std::uint64_t ai_frames_1s = 0;
  std::uint64_t messages_1s = 0;
  EngineCounters engine;
  RoutingCounters routing;
  std::uint64_t ingest_dropped = 0;
  std::uint64_t output_failures = 0;
  std::uint64_t log_written = 0;
  std::uint64_t log_dropped = 0;
  bool log_enabled = false;
  std::string log_file;
  NetCounters net;
  std::vector<double> values;
  std::vector<std::string> disconnected;
  std::vector<std::string> missing_devices;
  std::string last_error;
};

nlohmann::json to_json(const StatusSnapshot& status);

/// Runs an Engine against MIDI devices, a session log and the network sinks.
/// The engine itself is touched only by the loop thread (or by the caller of
/// step() when the loop is not started); everything else talks to it through
/// queues that are drained at tick boundaries.
class Runtime : private EngineObserver {
 public:
  Runtime(EngineConfig config, std::shared_ptr<const MdrnnParams> model, MidiBackend& backend,
          RuntimeOptions options = {}, ClockFn clock = steady_seconds);
  ~Runtime() override;

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  /// Opens every input and output named by the config. With strict set a
  /// missing device throws DeviceNotFound; otherwise it is reported in status.
  void open_devices(bool strict = true);

  void start();
  void stop();
  bool running() const { return running_.load(); }

  /// One tick at engine time now. Only valid while the loop thread is stopped.
  void step(double now);

  // Thread-safe entry points.
  bool ingest(const TimedMidi& message);
  StatusSnapshot status() const;
  EngineConfig config() const;
  std::shared_ptr<const MdrnnParams> model() const;
  /// Queued for the next tick boundary. model may be null to keep the current one.
  std::future<void> apply(EngineConfig config, std::shared_ptr<const MdrnnParams> model = nullptr);
  std::filesystem::path log_dir() const;
  AsyncLogWriter& log_writer() { return log_; }
  /// Bound WebSocket port, 0 when the feed is disabled.
  int websocket_port() const;
  void flush_outputs();
  double now() const { return clock_(); }

 private:
  struct ApplyRequest {
    EngineConfig config;
    std::shared_ptr<const MdrnnParams> model;
    std::promise<void> done;
  };

  void on_record(const LogRecord& record) override;
  void on_frame(const ContinuousFrame& frame, Source source, double at) override;
  void on_lead_change(Lead lead, double at) override;
  void on_error(const std::string& message) override;

  void handle_input(const MidiInputEvent& event);
  void process_applies();
  void send(const TimedMidi& message);
  void publish(double now);
  void loop();
  void open_devices_locked(const EngineConfig& config, bool strict);

  ClockFn clock_;
  MidiBackend& backend_;
  RuntimeOptions options_;
  double started_at_;
  std::unique_ptr<Engine> engine_;
  EngineConfig engine_config_;  // mirror used by the router
  InboundRouter inbound_;

  AsyncLogWriter log_;
  std::unique_ptr<NetEmitter> net_;

  std::mutex devices_mutex_;
  std::vector<std::unique_ptr<MidiInput>> inputs_;
  std::map<std::string, std::unique_ptr<MidiOutput>> outputs_;
  std::set<std::string> missing_devices_;
  std::set<std::string> disconnected_;

  std::mutex ingest_mutex_;
  std::deque<TimedMidi> ingest_;
  std::uint64_t ingest_dropped_ = 0;

  std::mutex apply_mutex_;
  std::deque<ApplyRequest> applies_;

  std::deque<std::pair<double, Source>> recent_frames_;
  std::deque<std::pair<double, std::size_t>> recent_messages_;
  std::uint64_t output_failures_ = 0;
  std::string last_error_;

  mutable std::mutex status_mutex_;
  StatusSnapshot status_;
  EngineConfig published_config_;
  std::shared_ptr<const MdrnnParams> published_model_;

  std::atomic<int> ws_port_{0};
  std::atomic<bool> running_{false};
  std::thread thread_;
};

}  // namespace impsy
