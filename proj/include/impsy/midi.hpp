#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace impsy {

enum class MidiKind { note_on, note_off, control_change, other_passthrough };

/// A MIDI 1.0 message. Channel-voice kinds use channel/data1/data2; anything else
/// (program change, pitch bend, aftertouch, system common, real-time) keeps its
/// original bytes in raw.
struct MidiMessage {
  MidiKind kind = MidiKind::other_passthrough;
  std::uint8_t channel = 0;
  std::uint8_t data1 = 0;
  std::uint8_t data2 = 0;
  std::vector<std::uint8_t> raw;

  static MidiMessage note_on(int channel, int note, int velocity);
  static MidiMessage note_off(int channel, int note, int velocity = 0);
  static MidiMessage control_change(int channel, int number, int value);
  static MidiMessage passthrough(std::vector<std::uint8_t> bytes);

  bool operator==(const MidiMessage&) const = default;
};

/// A message stamped with the monotonic time (seconds) it was read or is due,
/// and the device it came from or goes to.
struct TimedMidi {
  MidiMessage message;
  double at = 0.0;
  std::string device;

  bool operator==(const TimedMidi&) const = default;
};

/// Incremental MIDI 1.0 byte-stream parser. Chunks may split anywhere.
///
/// Handles running status, normalizes note-on with velocity 0 to note-off,
/// passes real-time bytes (0xF8-0xFF) through without touching running status,
/// and skips system-exclusive payloads. Data bytes with no status are dropped
/// and counted.
class MidiParser {
 public:
  /// Appends every message completed by bytes to out.
  void feed(std::span<const std::uint8_t> bytes, std::vector<MidiMessage>& out);
  std::vector<MidiMessage> feed(std::span<const std::uint8_t> bytes);

  std::uint64_t dropped_bytes() const { return dropped_; }
  std::uint64_t sysex_bytes_skipped() const { return sysex_skipped_; }

  void reset();

 private:
  void complete(std::vector<MidiMessage>& out);

  std::uint8_t status_ = 0;   // status of the message being assembled
  bool running_ = false;      // status_ may be reused by following data bytes
  std::uint8_t data_[2] = {0, 0};
  int have_ = 0;
  int need_ = 0;
  bool in_sysex_ = false;
  std::uint64_t dropped_ = 0;
  std::uint64_t sysex_skipped_ = 0;
};

/// Stateless wrapper: parse a complete buffer with a fresh parser.
std::vector<MidiMessage> parse_stream(std::span<const std::uint8_t> bytes);

/// Canonical encoding: explicit status on every message, never running status.
std::vector<std::uint8_t> serialize(const MidiMessage& message);

const char* to_string(MidiKind kind);

}  // namespace impsy
