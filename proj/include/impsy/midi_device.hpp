#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "impsy/midi.hpp"

namespace impsy {

/// Monotonic time source in seconds.
using ClockFn = std::function<double()>;

/// Seconds on std::chrono::steady_clock.
double steady_seconds();

/// Signals that an input device went away; the stream delivers nothing further.
struct StreamEnd {
  std::string device;
  double at = 0.0;
};

using MidiInputEvent = std::variant<TimedMidi, StreamEnd>;
using MidiInputCallback = std::function<void(const MidiInputEvent&)>;

class DeviceNotFound : public std::runtime_error {
 public:
  DeviceNotFound(const std::string& selector, std::vector<std::string> candidates);
  const std::vector<std::string>& candidates() const { return candidates_; }

 private:
  std::vector<std::string> candidates_;
};

/// Resolves a selector against device names: exact match first, then the first
/// name containing the selector. Throws DeviceNotFound with the candidates.
std::string select_device(const std::string& selector, const std::vector<std::string>& names);

/// True when selector picks name under the exact-or-substring rule; empty matches anything.
bool selector_matches(const std::string& selector, const std::string& name);

class MidiInput {
 public:
  virtual ~MidiInput() = default;
  virtual const std::string& name() const = 0;
  virtual bool connected() const = 0;
};

class MidiOutput {
 public:
  virtual ~MidiOutput() = default;
  virtual const std::string& name() const = 0;
  /// Writes the serialized message. Returns false when the device is gone.
  virtual bool send(const MidiMessage& message) = 0;
};

class MidiBackend {
 public:
  virtual ~MidiBackend() = default;
  virtual std::vector<std::string> list_devices() = 0;
  /// The callback runs on a backend thread (or the writer's thread for virtual
  /// devices) with messages already stamped at ingest.
  virtual std::unique_ptr<MidiInput> open_input(const std::string& selector,
                                                MidiInputCallback callback) = 0;
  virtual std::unique_ptr<MidiOutput> open_output(const std::string& selector) = 0;
};

/// In-process MIDI devices. A device carries two byte streams: what the device
/// sends to the host (inject) and what the host sends to the device (captured,
/// and echoed back into the input side when the device is a loopback).
class VirtualMidiBackend : public MidiBackend {
 public:
  explicit VirtualMidiBackend(ClockFn clock = steady_seconds);
  ~VirtualMidiBackend() override;

  class Device;

  std::shared_ptr<Device> create_device(const std::string& name, bool loopback = false);
  std::shared_ptr<Device> device(const std::string& name) const;

  std::vector<std::string> list_devices() override;
  std::unique_ptr<MidiInput> open_input(const std::string& selector,
                                        MidiInputCallback callback) override;
  std::unique_ptr<MidiOutput> open_output(const std::string& selector) override;

 private:
  ClockFn clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Device>> devices_;
};

class VirtualMidiBackend::Device {
 public:
  Device(std::string name, bool loopback, ClockFn clock);

  const std::string& name() const { return name_; }

  /// Bytes the device sends toward the host; parsed per subscriber.
  void inject(std::span<const std::uint8_t> bytes);
  void inject(const MidiMessage& message);

  /// Everything the host has written to this device, in order.
  std::vector<std::uint8_t> received() const;
  std::vector<MidiMessage> received_messages() const;
  void clear_received();

  /// Unplug: subscribers get StreamEnd and writes start failing.
  void disconnect();
  bool connected() const { return connected_.load(); }

  // Backend plumbing.
  int subscribe(MidiInputCallback callback);
  void unsubscribe(int id);
  bool write_from_host(std::span<const std::uint8_t> bytes);

 private:
  struct Subscriber {
    int id;
    MidiParser parser;
    MidiInputCallback callback;
  };

  std::string name_;
  bool loopback_;
  ClockFn clock_;
  std::atomic<bool> connected_{true};
  mutable std::mutex mutex_;
  std::vector<Subscriber> subscribers_;
  std::vector<std::uint8_t> received_;
  int next_id_ = 1;
};

/// Linux raw MIDI character devices (/dev/snd/midiC*D*, /dev/midi*) and explicit
/// /dev paths such as a UART. Names carry the ALSA card id when available so
/// selectors like "volca" match.
class RawMidiBackend : public MidiBackend {
 public:
  explicit RawMidiBackend(ClockFn clock = steady_seconds);

  std::vector<std::string> list_devices() override;
  std::unique_ptr<MidiInput> open_input(const std::string& selector,
                                        MidiInputCallback callback) override;
  std::unique_ptr<MidiOutput> open_output(const std::string& selector) override;

 private:
  std::string resolve(const std::string& selector);
  ClockFn clock_;
};

/// Device path inside a RawMidiBackend name, e.g. "volca (/dev/snd/midiC1D0)" -> "/dev/snd/midiC1D0".
std::string raw_device_path(const std::string& name);

}  // namespace impsy
