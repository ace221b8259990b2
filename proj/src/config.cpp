#include "impsy/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "impsy/mdrnn.hpp"

namespace impsy {

using nlohmann::json;

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::string out = "invalid config";
  for (const auto& v : violations) out += "\n  " + v;
  return out;
}

// Reads one JSON object strictly: each key must be consumed by a getter,
// leftovers are reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path, std::vector<std::string>& violations)
      : object_(object), path_(std::move(path)), violations_(violations) {
    if (!object_.is_object()) {
      fail(path_.empty() ? "document" : path_, "expected an object");
      ok_ = false;
    }
  }

  ~ObjectReader() {
    if (!ok_) return;
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.contains(key)) fail(child(key), "unknown key");
    }
  }

  bool ok() const { return ok_; }

  const json* find(const std::string& key, bool required) {
    if (!ok_) return nullptr;
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) {
      if (required) fail(child(key), "required field missing");
      return nullptr;
    }
    return &*it;
  }

  void integer(const std::string& key, int& out, int lo, int hi, bool required = false) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_number_integer()) {
      fail(child(key), "expected an integer");
      return;
    }
    const auto value = v->get<long long>();
    if (value < lo || value > hi) {
      std::ostringstream msg;
      msg << "value " << value << " outside [" << lo << ", " << hi << "]";
      fail(child(key), msg.str());
      return;
    }
    out = static_cast<int>(value);
  }

  void real(const std::string& key, double& out, bool required = false) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_number()) {
      fail(child(key), "expected a number");
      return;
    }
    out = v->get<double>();
  }

  void boolean(const std::string& key, bool& out) {
    const json* v = find(key, false);
    if (!v) return;
    if (!v->is_boolean()) {
      fail(child(key), "expected a boolean");
      return;
    }
    out = v->get<bool>();
  }

  void string(const std::string& key, std::string& out, bool required = false) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_string()) {
      fail(child(key), "expected a string");
      return;
    }
    out = v->get<std::string>();
  }

  template <typename Enum>
  void enumeration(const std::string& key, Enum& out, const std::map<std::string, Enum>& names,
                   bool required = false) {
    const json* v = find(key, required);
    if (!v) return;
    if (!v->is_string()) {
      fail(child(key), "expected a string");
      return;
    }
    auto it = names.find(v->get<std::string>());
    if (it == names.end()) {
      fail(child(key), "unknown enum value '" + v->get<std::string>() + "'");
      return;
    }
    out = it->second;
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void fail(const std::string& where, const std::string& what) {
    violations_.push_back(where + ": " + what);
  }

 private:
  const json& object_;
  std::string path_;
  std::vector<std::string>& violations_;
  std::set<std::string> seen_;
  bool ok_ = true;
};

const std::map<std::string, RouteKind> kRouteKinds = {
    {"note_on", RouteKind::note_on},
    {"control_change", RouteKind::control_change},
};

const std::map<std::string, InteractionMode> kModes = {
    {"call_and_response", InteractionMode::call_and_response},
    {"ai_only", InteractionMode::ai_only},
    {"human_only", InteractionMode::human_only},
};

void check_dim(int dim, int dimension, const std::string& where,
               std::vector<std::string>& violations) {
  if (dim < 0 || dim >= dimension) {
    std::ostringstream msg;
    msg << where << ": dimension out of range (" << dim << " not in [0, " << dimension << "))";
    violations.push_back(msg.str());
  }
}

RouteIn read_route_in(const json& raw, const std::string& path,
                      std::vector<std::string>& violations) {
  RouteIn route;
  ObjectReader r(raw, path, violations);
  if (!r.ok()) return route;
  r.string("device", route.device);
  r.enumeration("kind", route.kind, kRouteKinds, true);
  r.integer("channel", route.channel, 0, 15);
  r.integer("number", route.number, 0, 127);
  r.integer("dim", route.dim, -1000000, 1000000, true);
  return route;
}

RouteOut read_route_out(const json& raw, const std::string& path,
                        std::vector<std::string>& violations) {
  RouteOut route;
  ObjectReader r(raw, path, violations);
  if (!r.ok()) return route;
  r.string("device", route.device);
  r.enumeration("kind", route.kind, kRouteKinds, true);
  r.integer("channel", route.channel, 0, 15);
  r.integer("number", route.number, 0, 127);
  r.integer("dim", route.dim, -1000000, 1000000, true);
  r.integer("out_lo", route.out_lo, 0, 127);
  r.integer("out_hi", route.out_hi, 0, 127);
  r.integer("velocity", route.velocity, 1, 127);
  if (route.out_lo > route.out_hi) {
    std::ostringstream msg;
    msg << path << ": out_lo > out_hi (" << route.out_lo << " > " << route.out_hi << ")";
    violations.push_back(msg.str());
  }
  return route;
}

void read_endpoint(ObjectReader& parent, const std::string& key, bool& enabled, std::string& host,
                   int& port, std::vector<std::string>& violations) {
  const json* v = parent.find(key, false);
  if (!v) return;
  ObjectReader r(*v, parent.child(key), violations);
  if (!r.ok()) return;
  r.boolean("enabled", enabled);
  r.string("host", host);
  r.integer("port", port, 1, 65535);
}

void positive(double value, const std::string& where, std::vector<std::string>& violations,
              bool allow_zero = false) {
  const bool bad = allow_zero ? !(value >= 0.0) : !(value > 0.0);
  if (bad || !std::isfinite(value)) {
    violations.push_back(where + (allow_zero ? ": must be >= 0" : ": must be > 0"));
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

const char* to_string(RouteKind kind) {
  return kind == RouteKind::note_on ? "note_on" : "control_change";
}

const char* to_string(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::call_and_response:
      return "call_and_response";
    case InteractionMode::ai_only:
      return "ai_only";
    case InteractionMode::human_only:
      return "human_only";
  }
  return "call_and_response";
}

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

EngineConfig validate_config(const json& raw, const ValidateOptions& options) {
  std::vector<std::string> violations;
  EngineConfig config;
  {
    ObjectReader r(raw, "", violations);
    if (!r.ok()) throw ConfigError(std::move(violations));

    if (const json* version = r.find("version", false)) {
      if (!version->is_number_integer() || version->get<long long>() != 1) {
        violations.push_back("version: unsupported config version");
      }
    }
    r.integer("dimension", config.dimension, 1, 1024, true);
    r.string("model_file", config.model_file, true);
    r.string("log_dir", config.log_dir);
    if (const json* seed = r.find("rng_seed", false); seed && !seed->is_null()) {
      if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<long long>() >= 0)) {
        violations.push_back("rng_seed: expected a non-negative integer or null");
      } else {
        config.rng_seed = seed->get<std::uint64_t>();
      }
    }
    r.real("dt_max", config.dt_max);
    positive(config.dt_max, "dt_max", violations);
    r.real("gate_s", config.gate_s);
    positive(config.gate_s, "gate_s", violations);
    if (const json* pass = r.find("passthrough", false); pass && !pass->is_null()) {
      if (!pass->is_string()) {
        violations.push_back("passthrough: expected a device selector string or null");
      } else {
        config.passthrough = pass->get<std::string>();
      }
    }

    if (const json* inputs = r.find("inputs", false)) {
      if (!inputs->is_array()) {
        violations.push_back("inputs: expected an array");
      } else {
        for (std::size_t i = 0; i < inputs->size(); ++i) {
          config.inputs.push_back(
              read_route_in((*inputs)[i], "inputs[" + std::to_string(i) + "]", violations));
        }
      }
    }
    if (const json* outputs = r.find("outputs", false)) {
      if (!outputs->is_array()) {
        violations.push_back("outputs: expected an array");
      } else {
        for (std::size_t i = 0; i < outputs->size(); ++i) {
          config.outputs.push_back(
              read_route_out((*outputs)[i], "outputs[" + std::to_string(i) + "]", violations));
        }
      }
    }

    if (const json* interaction = r.find("interaction", false)) {
      ObjectReader ir(*interaction, "interaction", violations);
      if (ir.ok()) {
        ir.enumeration("mode", config.interaction.mode, kModes);
        ir.real("switchover_s", config.interaction.switchover_s);
        ir.real("tick_hz", config.interaction.tick_hz);
      }
    }
    positive(config.interaction.switchover_s, "interaction.switchover_s", violations);
    positive(config.interaction.tick_hz, "interaction.tick_hz", violations);

    if (const json* sampling = r.find("sampling", false)) {
      ObjectReader sr(*sampling, "sampling", violations);
      if (sr.ok()) {
        sr.real("pi_temp", config.sampling.pi_temp);
        sr.real("sigma_temp", config.sampling.sigma_temp);
      }
    }
    positive(config.sampling.pi_temp, "sampling.pi_temp", violations);
    positive(config.sampling.sigma_temp, "sampling.sigma_temp", violations, true);

    if (const json* net = r.find("net", false)) {
      ObjectReader nr(*net, "net", violations);
      if (nr.ok()) {
        read_endpoint(nr, "osc", config.net.osc.enabled, config.net.osc.host, config.net.osc.port,
                      violations);
        read_endpoint(nr, "websocket", config.net.websocket.enabled, config.net.websocket.host,
                      config.net.websocket.port, violations);
      }
    }
  }

  for (std::size_t i = 0; i < config.inputs.size(); ++i) {
    check_dim(config.inputs[i].dim, config.dimension, "inputs[" + std::to_string(i) + "].dim",
              violations);
  }
  for (std::size_t i = 0; i < config.outputs.size(); ++i) {
    check_dim(config.outputs[i].dim, config.dimension, "outputs[" + std::to_string(i) + "].dim",
              violations);
  }

  // Note routes match every note on their channel, so the number is not part of the key.
  std::map<std::tuple<std::string, RouteKind, int, int>, std::size_t> seen;
  for (std::size_t i = 0; i < config.inputs.size(); ++i) {
    const auto& route = config.inputs[i];
    const int number = route.kind == RouteKind::note_on ? -1 : route.number;
    auto [it, inserted] = seen.emplace(std::tuple{route.device, route.kind, route.channel, number}, i);
    if (!inserted) {
      violations.push_back("inputs[" + std::to_string(i) +
                           "]: duplicate input route (same device, kind, channel and number as "
                           "inputs[" + std::to_string(it->second) + "])");
    }
  }

  if (options.check_model_file && !config.model_file.empty()) {
    const auto model_path = resolve_path(options.base_dir, config.model_file);
    std::error_code ec;
    if (std::filesystem::is_regular_file(model_path, ec)) {
      try {
        const auto header = read_weight_header(model_path);
        if (header.shape.dim != config.dimension) {
          violations.push_back("model_file: dimension mismatch (model D=" +
                               std::to_string(header.shape.dim) +
                               ", config D=" + std::to_string(config.dimension) + ")");
        }
      } catch (const std::exception& e) {
        violations.push_back(std::string("model_file: ") + e.what());
      }
    }
  }

  if (!violations.empty()) throw ConfigError(std::move(violations));
  return config;
}

json to_json(const EngineConfig& config) {
  json inputs = json::array();
  for (const auto& r : config.inputs) {
    inputs.push_back({{"device", r.device},
                      {"kind", to_string(r.kind)},
                      {"channel", r.channel},
                      {"number", r.number},
                      {"dim", r.dim}});
  }
  json outputs = json::array();
  for (const auto& r : config.outputs) {
    outputs.push_back({{"device", r.device},
                       {"kind", to_string(r.kind)},
                       {"channel", r.channel},
                       {"number", r.number},
                       {"dim", r.dim},
                       {"out_lo", r.out_lo},
                       {"out_hi", r.out_hi},
                       {"velocity", r.velocity}});
  }
  json doc = {
      {"version", 1},
      {"dimension", config.dimension},
      {"model_file", config.model_file},
      {"log_dir", config.log_dir},
      {"rng_seed", config.rng_seed ? json(*config.rng_seed) : json(nullptr)},
      {"dt_max", config.dt_max},
      {"gate_s", config.gate_s},
      {"passthrough", config.passthrough ? json(*config.passthrough) : json(nullptr)},
      {"inputs", inputs},
      {"outputs", outputs},
      {"interaction",
       {{"mode", to_string(config.interaction.mode)},
        {"switchover_s", config.interaction.switchover_s},
        {"tick_hz", config.interaction.tick_hz}}},
      {"sampling",
       {{"pi_temp", config.sampling.pi_temp}, {"sigma_temp", config.sampling.sigma_temp}}},
      {"net",
       {{"osc",
         {{"enabled", config.net.osc.enabled},
          {"host", config.net.osc.host},
          {"port", config.net.osc.port}}},
        {"websocket",
         {{"enabled", config.net.websocket.enabled},
          {"host", config.net.websocket.host},
          {"port", config.net.websocket.port}}}}},
  };
  return doc;
}

EngineConfig load_config_file(const std::filesystem::path& path, bool check_model_file) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open config file"});
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  ValidateOptions options;
  options.base_dir = path.parent_path();
  options.check_model_file = check_model_file;
  return validate_config(raw, options);
}

void save_config_file(const EngineConfig& config, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << to_json(config).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace presets {

EngineConfig volca(const std::string& model_file) {
  EngineConfig c;
  c.dimension = 1;
  c.model_file = model_file;
  c.interaction.mode = InteractionMode::ai_only;
  c.outputs.push_back({.device = "volca", .kind = RouteKind::note_on, .channel = 0, .dim = 0});
  return c;
}

EngineConfig microfreak(const std::string& model_file) {
  EngineConfig c;
  c.dimension = 8;
  c.model_file = model_file;
  c.interaction.switchover_s = kFastSwitchoverSeconds;
  c.inputs.push_back({.device = "microfreak", .kind = RouteKind::note_on, .channel = 0, .dim = 0});
  c.outputs.push_back({.device = "microfreak", .kind = RouteKind::note_on, .channel = 0, .dim = 0});
  for (int d = 1; d < 8; ++d) {
    const int cc = 20 + d;
    c.inputs.push_back({.device = "microfreak",
                        .kind = RouteKind::control_change,
                        .channel = 0,
                        .number = cc,
                        .dim = d});
    c.outputs.push_back({.device = "microfreak",
                         .kind = RouteKind::control_change,
                         .channel = 0,
                         .number = cc,
                         .dim = d});
  }
  return c;
}

EngineConfig daw(const std::string& model_file) {
  EngineConfig c;
  c.dimension = 8;
  c.model_file = model_file;
  for (int d = 0; d < 8; ++d) {
    c.inputs.push_back({.device = "daw",
                        .kind = RouteKind::control_change,
                        .channel = d,
                        .number = 1,
                        .dim = d});
  }
  for (int d = 0; d < 4; ++d) {
    c.outputs.push_back({.device = "daw", .kind = RouteKind::note_on, .channel = d, .dim = d});
  }
  for (int d = 4; d < 8; ++d) {
    c.outputs.push_back({.device = "daw",
                         .kind = RouteKind::control_change,
                         .channel = d,
                         .number = 1,
                         .dim = d});
  }
  return c;
}

EngineConfig intelligent_setup(const std::string& model_file) {
  EngineConfig c;
  c.dimension = 8;
  c.model_file = model_file;
  for (int d = 0; d < 8; ++d) {
    c.inputs.push_back({.device = "x-touch",
                        .kind = RouteKind::control_change,
                        .channel = 0,
                        .number = 1 + d,
                        .dim = d});
    // LED rings only show a coarse range.
    c.outputs.push_back({.device = "x-touch",
                         .kind = RouteKind::control_change,
                         .channel = 0,
                         .number = 1 + d,
                         .dim = d,
                         .out_lo = 0,
                         .out_hi = 12});
  }
  c.outputs.push_back({.device = "s-1", .kind = RouteKind::note_on, .channel = 0, .dim = 0});
  for (int d = 1; d < 8; ++d) {
    c.outputs.push_back({.device = "s-1",
                         .kind = RouteKind::control_change,
                         .channel = 0,
                         .number = 70 + d,
                         .dim = d});
  }
  c.passthrough = "s-1";
  return c;
}

}  // namespace presets

}  // namespace impsy
