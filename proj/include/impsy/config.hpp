#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "impsy/frame.hpp"

namespace impsy {

enum class RouteKind { note_on, control_change };

/// Maps one incoming MIDI control (or a channel's note numbers) onto a model dimension.
struct RouteIn {
  std::string device;  // selector; empty matches any device
  RouteKind kind = RouteKind::control_change;
  int channel = 0;
  int number = 0;  // CC number; ignored for note_on
  int dim = 0;

  bool operator==(const RouteIn&) const = default;
};

/// Maps a model dimension onto an outgoing MIDI message with a restricted data range.
struct RouteOut {
  std::string device;
  RouteKind kind = RouteKind::note_on;
  int channel = 0;
  int number = 0;  // CC number; ignored for note_on
  int dim = 0;
  int out_lo = 0;
  int out_hi = 127;
  int velocity = 100;  // note_on only

  bool operator==(const RouteOut&) const = default;
};

enum class InteractionMode { call_and_response, ai_only, human_only };

struct InteractionConfig {
  InteractionMode mode = InteractionMode::call_and_response;
  double switchover_s = 2.0;
  double tick_hz = 100.0;

  bool operator==(const InteractionConfig&) const = default;
};

/// Fast-interleaving switchover used for the MicroFreak/S-1 style preset.
constexpr double kFastSwitchoverSeconds = 0.1;

struct OscSinkConfig {
  bool enabled = false;
  std::string host = "127.0.0.1";
  int port = 6000;

  bool operator==(const OscSinkConfig&) const = default;
};

struct WebSocketSinkConfig {
  bool enabled = false;
  std::string host = "127.0.0.1";
  int port = 5001;

  bool operator==(const WebSocketSinkConfig&) const = default;
};

struct NetConfig {
  OscSinkConfig osc;
  WebSocketSinkConfig websocket;

  bool operator==(const NetConfig&) const = default;
};

struct SamplingConfig {
  double pi_temp = 1.0;
  double sigma_temp = 1.0;

  bool operator==(const SamplingConfig&) const = default;
};

struct EngineConfig {
  int dimension = 1;
  std::string model_file;
  std::vector<RouteIn> inputs;
  std::vector<RouteOut> outputs;
  InteractionConfig interaction;
  NetConfig net;
  SamplingConfig sampling;
  std::string log_dir = "logs";
  std::optional<std::uint64_t> rng_seed;
  double dt_max = kDefaultDtMax;
  double gate_s = 0.25;
  // Output device selector for unrouted input; nullopt disables passthrough.
  std::optional<std::string> passthrough;

  bool operator==(const EngineConfig&) const = default;
};

/// Raised by validate_config; carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct ValidateOptions {
  // Relative model paths are resolved against this directory.
  std::filesystem::path base_dir;
  // When the model file exists, compare its dimension with the config.
  bool check_model_file = true;
};

/// Parses and validates a config document, filling defaults for omitted fields.
/// Unknown keys are rejected. Throws ConfigError listing all violations.
EngineConfig validate_config(const nlohmann::json& raw, const ValidateOptions& options = {});

nlohmann::json to_json(const EngineConfig& config);

EngineConfig load_config_file(const std::filesystem::path& path, bool check_model_file = true);

/// Writes via a temporary file and rename so readers never see a partial document.
void save_config_file(const EngineConfig& config, const std::filesystem::path& path);

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& path);

const char* to_string(RouteKind kind);
const char* to_string(InteractionMode mode);

namespace presets {

/// One continuous value to MIDI pitch on a single synth (Volca style).
EngineConfig volca(const std::string& model_file);

/// Notes plus seven knobs tracked and generated on one synth, fast switchover.
EngineConfig microfreak(const std::string& model_file);

/// Eight CC inputs; four note channels and four CC channels out.
EngineConfig daw(const std::string& model_file);

/// Controller with LED rings feeding a synth; outputs echo onto the controller in a limited range.
EngineConfig intelligent_setup(const std::string& model_file);

}  // namespace presets

}  // namespace impsy
