#include "impsy/midi.hpp"

#include <algorithm>

namespace impsy {

namespace {

std::uint8_t data7(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 127)); }
std::uint8_t chan4(int c) { return static_cast<std::uint8_t>(std::clamp(c, 0, 15)); }

// Data bytes following a channel status byte.
int channel_data_length(std::uint8_t status) {
  const std::uint8_t high = status & 0xF0;
  return (high == 0xC0 || high == 0xD0) ? 1 : 2;
}

// Data bytes following a system common status byte (0xF1-0xF6).
int system_common_length(std::uint8_t status) {
  switch (status) {
    case 0xF1:
    case 0xF3:
      return 1;
    case 0xF2:
      return 2;
    default:
      return 0;
  }
}

}  // namespace

MidiMessage MidiMessage::note_on(int channel, int note, int velocity) {
  return {MidiKind::note_on, chan4(channel), data7(note), data7(velocity), {}};
}

MidiMessage MidiMessage::note_off(int channel, int note, int velocity) {
  return {MidiKind::note_off, chan4(channel), data7(note), data7(velocity), {}};
}

MidiMessage MidiMessage::control_change(int channel, int number, int value) {
  return {MidiKind::control_change, chan4(channel), data7(number), data7(value), {}};
}

MidiMessage MidiMessage::passthrough(std::vector<std::uint8_t> bytes) {
  MidiMessage m;
  m.kind = MidiKind::other_passthrough;
  if (!bytes.empty() && bytes[0] >= 0x80 && bytes[0] < 0xF0) m.channel = bytes[0] & 0x0F;
  m.raw = std::move(bytes);
  return m;
}

void MidiParser::reset() {
  status_ = 0;
  running_ = false;
  have_ = 0;
  need_ = 0;
  in_sysex_ = false;
}

void MidiParser::complete(std::vector<MidiMessage>& out) {
  const std::uint8_t high = status_ & 0xF0;
  const std::uint8_t channel = status_ & 0x0F;
  if (high == 0x90 && data_[1] > 0) {
    out.push_back({MidiKind::note_on, channel, data_[0], data_[1], {}});
  } else if (high == 0x90 || high == 0x80) {
    out.push_back({MidiKind::note_off, channel, data_[0], data_[1], {}});
  } else if (high == 0xB0) {
    out.push_back({MidiKind::control_change, channel, data_[0], data_[1], {}});
  } else {
    std::vector<std::uint8_t> raw{status_};
    raw.insert(raw.end(), data_, data_ + need_);
    out.push_back(MidiMessage::passthrough(std::move(raw)));
  }
  have_ = 0;
  if (!running_) {
    status_ = 0;
    need_ = 0;
  }
}

void MidiParser::feed(std::span<const std::uint8_t> bytes, std::vector<MidiMessage>& out) {
  for (const std::uint8_t b : bytes) {
    if (b >= 0xF8) {
      out.push_back(MidiMessage::passthrough({b}));
      continue;
    }
    if (b >= 0x80) {
      if (in_sysex_) in_sysex_ = false;  // any status byte ends a sysex payload
      have_ = 0;
      if (b == 0xF0) {
        in_sysex_ = true;
        status_ = 0;
        running_ = false;
        need_ = 0;
      } else if (b == 0xF7) {
        status_ = 0;
        running_ = false;
        need_ = 0;
      } else if (b >= 0xF1) {
        // System common cancels running status.
        status_ = b;
        running_ = false;
        need_ = system_common_length(b);
        if (need_ == 0) complete(out);
      } else {
        status_ = b;
        running_ = true;
        need_ = channel_data_length(b);
      }
      continue;
    }
    if (in_sysex_) {
      ++sysex_skipped_;
      continue;
    }
    if (status_ == 0 || need_ == 0) {
      ++dropped_;
      continue;
    }
    data_[have_++] = b;
    if (have_ == need_) complete(out);
  }
}

std::vector<MidiMessage> MidiParser::feed(std::span<const std::uint8_t> bytes) {
  std::vector<MidiMessage> out;
  feed(bytes, out);
  return out;
}

std::vector<MidiMessage> parse_stream(std::span<const std::uint8_t> bytes) {
  MidiParser parser;
  return parser.feed(bytes);
}

std::vector<std::uint8_t> serialize(const MidiMessage& m) {
  const std::uint8_t ch = m.channel & 0x0F;
  switch (m.kind) {
    case MidiKind::note_on:
      return {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(m.data1 & 0x7F),
              static_cast<std::uint8_t>(m.data2 & 0x7F)};
    case MidiKind::note_off:
      return {static_cast<std::uint8_t>(0x80 | ch), static_cast<std::uint8_t>(m.data1 & 0x7F),
              static_cast<std::uint8_t>(m.data2 & 0x7F)};
    case MidiKind::control_change:
      return {static_cast<std::uint8_t>(0xB0 | ch), static_cast<std::uint8_t>(m.data1 & 0x7F),
              static_cast<std::uint8_t>(m.data2 & 0x7F)};
    case MidiKind::other_passthrough:
      return m.raw;
  }
  return {};
}

const char* to_string(MidiKind kind) {
  switch (kind) {
    case MidiKind::note_on:
      return "note_on";
    case MidiKind::note_off:
      return "note_off";
    case MidiKind::control_change:
      return "control_change";
    case MidiKind::other_passthrough:
      return "other";
  }
  return "other";
}

}  // namespace impsy
