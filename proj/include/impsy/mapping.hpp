#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "impsy/config.hpp"
#include "impsy/midi.hpp"

namespace impsy {

struct ScaledInput {
  int dim = 0;
  double value = 0.0;
};

class RouteMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// True when the message kind, channel and (for CC) number match the route.
/// Device matching is separate; see route_inbound.
bool route_accepts(const MidiMessage& message, const RouteIn& route);

/// note_on -> note/127, control_change -> value/127. Throws RouteMismatch if the
/// message does not match the route.
ScaledInput scale_in(const MidiMessage& message, const RouteIn& route);

/// round-half-up(out_lo + value * (out_hi - out_lo)) clamped to the route range.
int scale_out_data(double value, const RouteOut& route);

/// Note routes produce a note-on with the route velocity; CC routes a control change.
MidiMessage scale_out(double value, const RouteOut& route);

struct InboundEvent {
  int dim = 0;
  double value = 0.0;
  double at = 0.0;
};

struct RoutingCounters {
  std::uint64_t received = 0;
  std::uint64_t matched = 0;
  std::uint64_t passed_through = 0;
  std::uint64_t dropped = 0;
};

/// Result of routing one inbound message: a model event, a passthrough copy, or neither.
struct InboundResult {
  std::optional<InboundEvent> event;
  std::optional<TimedMidi> passthrough;
};

/// Stateless inbound routing except for the counters, which always satisfy
/// matched + passed_through + dropped == received.
class InboundRouter {
 public:
  explicit InboundRouter(const EngineConfig& config) : config_(&config) {}

  void set_config(const EngineConfig& config) { config_ = &config; }

  /// First matching route (in list order) wins. Note-offs, real-time and
  /// unmatched messages are forwarded verbatim when passthrough is configured,
  /// otherwise dropped.
  InboundResult route(const TimedMidi& message);

  const RoutingCounters& counters() const { return counters_; }

 private:
  const EngineConfig* config_;
  RoutingCounters counters_;
};

/// Convenience single-shot form without counters.
std::optional<InboundEvent> route_inbound(const TimedMidi& message, const EngineConfig& config);

/// Turns frames into per-route messages, suppressing control changes whose
/// data byte has not changed since the last emission on that route.
class OutboundRouter {
 public:
  explicit OutboundRouter(const EngineConfig& config);

  /// One message per output route, stamped with at and the route's device.
  /// When routes is non-null it receives the output route index of each message.
  std::vector<TimedMidi> route(const ContinuousFrame& frame, double at,
                               std::vector<std::size_t>* routes = nullptr);

  /// Forget CC history, e.g. after a config change.
  void reset();

 private:
  std::vector<RouteOut> outputs_;
  std::vector<std::optional<int>> last_cc_;
};

}  // namespace impsy
