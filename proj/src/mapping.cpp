#include "impsy/mapping.hpp"

#include <algorithm>
#include <cmath>

#include "impsy/midi_device.hpp"

namespace impsy {

bool route_accepts(const MidiMessage& message, const RouteIn& route) {
  if (message.channel != route.channel) return false;
  switch (route.kind) {
    case RouteKind::note_on:
      return message.kind == MidiKind::note_on;
    case RouteKind::control_change:
      return message.kind == MidiKind::control_change && message.data1 == route.number;
  }
  return false;
}

ScaledInput scale_in(const MidiMessage& message, const RouteIn& route) {
  if (!route_accepts(message, route)) throw RouteMismatch("message does not match input route");
  const int data = route.kind == RouteKind::note_on ? message.data1 : message.data2;
  return {route.dim, static_cast<double>(data) / 127.0};
}

int scale_out_data(double value, const RouteOut& route) {
  if (std::isnan(value)) value = 0.0;
  value = std::clamp(value, 0.0, 1.0);
  const double exact = route.out_lo + value * (route.out_hi - route.out_lo);
  const int data = static_cast<int>(std::floor(exact + 0.5));
  return std::clamp(data, route.out_lo, route.out_hi);
}

MidiMessage scale_out(double value, const RouteOut& route) {
  const int data = scale_out_data(value, route);
  if (route.kind == RouteKind::note_on) return MidiMessage::note_on(route.channel, data, route.velocity);
  return MidiMessage::control_change(route.channel, route.number, data);
}

InboundResult InboundRouter::route(const TimedMidi& message) {
  ++counters_.received;
  InboundResult result;
  for (const auto& r : config_->inputs) {
    if (!selector_matches(r.device, message.device)) continue;
    if (!route_accepts(message.message, r)) continue;
    const auto scaled = scale_in(message.message, r);
    result.event = InboundEvent{scaled.dim, scaled.value, message.at};
    ++counters_.matched;
    return result;
  }
  if (config_->passthrough) {
    result.passthrough = TimedMidi{message.message, message.at, *config_->passthrough};
    ++counters_.passed_through;
  } else {
    ++counters_.dropped;
  }
  return result;
}

std::optional<InboundEvent> route_inbound(const TimedMidi& message, const EngineConfig& config) {
  InboundRouter router(config);
  return router.route(message).event;
}

OutboundRouter::OutboundRouter(const EngineConfig& config)
    : outputs_(config.outputs), last_cc_(config.outputs.size()) {}

std::vector<TimedMidi> OutboundRouter::route(const ContinuousFrame& frame, double at,
                                             std::vector<std::size_t>* routes) {
  std::vector<TimedMidi> out;
  out.reserve(outputs_.size());
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    const auto& r = outputs_[i];
    if (r.dim < 0 || r.dim >= frame.dimension()) continue;
    MidiMessage m = scale_out(frame.values[static_cast<std::size_t>(r.dim)], r);
    if (r.kind == RouteKind::control_change) {
      if (last_cc_[i] && *last_cc_[i] == m.data2) continue;
      last_cc_[i] = m.data2;
    }
    out.push_back(TimedMidi{std::move(m), at, r.device});
    if (routes) routes->push_back(i);
  }
  return out;
}

void OutboundRouter::reset() { std::fill(last_cc_.begin(), last_cc_.end(), std::nullopt); }

}  // namespace impsy
