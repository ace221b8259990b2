#include "impsy/service.hpp"

#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "impsy/mdrnn.hpp"

namespace impsy {

using nlohmann::json;

namespace {

const char* kIndexPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>impsy</title></head>
<body><h1>impsy</h1><p>Web UI bundle not installed. API:</p>
<ul><li><a href="/api/status">/api/status</a></li><li><a href="/api/config">/api/config</a></li>
<li><a href="/api/logs">/api/logs</a></li><li><a href="/api/schema">/api/schema</a></li></ul>
</body></html>
)";

json route_schema(bool output) {
  json props = {
      {"device", {{"type", "string"}}},
      {"kind", {{"enum", {"note_on", "control_change"}}}},
      {"channel", {{"type", "integer"}, {"minimum", 0}, {"maximum", 15}}},
      {"number", {{"type", "integer"}, {"minimum", 0}, {"maximum", 127}}},
      {"dim", {{"type", "integer"}, {"minimum", 0}}},
  };
  if (output) {
    props["out_lo"] = {{"type", "integer"}, {"minimum", 0}, {"maximum", 127}};
    props["out_hi"] = {{"type", "integer"}, {"minimum", 0}, {"maximum", 127}};
    props["velocity"] = {{"type", "integer"}, {"minimum", 1}, {"maximum", 127}};
  }
  return {{"type", "object"},
          {"required", {"kind", "dim"}},
          {"additionalProperties", false},
          {"properties", props}};
}

json endpoint_schema() {
  return {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"enabled", {{"type", "boolean"}}},
            {"host", {{"type", "string"}}},
            {"port", {{"type", "integer"}, {"minimum", 1}, {"maximum", 65535}}}}}};
}

json counters_schema(std::initializer_list<const char*> keys) {
  json props = json::object();
  json required = json::array();
  for (const char* k : keys) {
    props[k] = {{"type", "integer"}, {"minimum", 0}};
    required.push_back(k);
  }
  return {{"type", "object"}, {"required", required}, {"properties", props}};
}

json error_body(const std::string& message) { return {{"error", message}}; }

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool write_atomically(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) return false;
  }
  std::filesystem::rename(tmp, path, ec);
  return !ec;
}

std::string sanitize_file_name(const std::string& name) {
  std::string base = std::filesystem::path(name).filename().string();
  std::string out;
  for (char c : base) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-') out += c;
  }
  if (out.empty() || out.front() == '.') out = "model.mdrnn";
  return out;
}

}  // namespace

json api_schema() {
  const json config = {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "EngineConfig"},
      {"type", "object"},
      {"required", {"dimension", "model_file"}},
      {"additionalProperties", false},
      {"properties",
       {{"version", {{"const", 1}}},
        {"dimension", {{"type", "integer"}, {"minimum", 1}, {"maximum", 1024}}},
        {"model_file", {{"type", "string"}}},
        {"log_dir", {{"type", "string"}}},
        {"rng_seed", {{"type", {"integer", "null"}}, {"minimum", 0}}},
        {"dt_max", {{"type", "number"}, {"exclusiveMinimum", 0}}},
        {"gate_s", {{"type", "number"}, {"exclusiveMinimum", 0}}},
        {"passthrough", {{"type", {"string", "null"}}}},
        {"inputs", {{"type", "array"}, {"items", route_schema(false)}}},
        {"outputs", {{"type", "array"}, {"items", route_schema(true)}}},
        {"interaction",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"mode", {{"enum", {"call_and_response", "ai_only", "human_only"}}}},
            {"switchover_s", {{"type", "number"}, {"exclusiveMinimum", 0}}},
            {"tick_hz", {{"type", "number"}, {"exclusiveMinimum", 0}}}}}}},
        {"sampling",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"pi_temp", {{"type", "number"}, {"exclusiveMinimum", 0}}},
            {"sigma_temp", {{"type", "number"}, {"minimum", 0}}}}}}},
        {"net",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"osc", endpoint_schema()}, {"websocket", endpoint_schema()}}}}}}}};

  const json status = {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "Status"},
      {"type", "object"},
      {"required",
       {"version", "state", "lead", "dimension", "mode", "model_file", "uptime_s", "last_second",
        "totals"}},
      {"properties",
       {{"version", {{"const", 1}}},
        {"state", {{"enum", {"running", "stopped"}}}},
        {"lead", {{"enum", {"human", "ai"}}}},
        {"dimension", {{"type", "integer"}, {"minimum", 1}}},
        {"mode", {{"enum", {"call_and_response", "ai_only", "human_only"}}}},
        {"switchover_s", {{"type", "number"}}},
        {"model_file", {{"type", "string"}}},
        {"uptime_s", {{"type", "number"}, {"minimum", 0}}},
        {"last_second", counters_schema({"human_events", "ai_frames", "midi_messages"})},
        {"totals", counters_schema({"human_events", "ai_frames_generated", "ai_frames_emitted",
                                    "ai_frames_cancelled", "midi_messages", "generation_failures",
                                    "ingest_dropped", "output_failures"})},
        {"routing", counters_schema({"received", "matched", "passed_through", "dropped"})},
        {"values", {{"type", "array"}, {"items", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}}}},
        {"disconnected", {{"type", "array"}, {"items", {{"type", "string"}}}}},
        {"missing_devices", {{"type", "array"}, {"items", {{"type", "string"}}}}},
        {"last_error", {{"type", "string"}}}}}};

  const json feed = {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "FeedMessage"},
      {"oneOf",
       {{{"type", "object"},
         {"required", {"v", "type", "t", "source", "values", "dt"}},
         {"properties",
          {{"v", {{"const", kFeedSchemaVersion}}},
           {"type", {{"const", "frame"}}},
           {"t", {{"type", "number"}}},
           {"source", {{"enum", {"human", "ai"}}}},
           {"values", {{"type", "array"}, {"items", {{"type", "number"}}}}},
           {"dt", {{"type", "number"}, {"minimum", 0}}}}}},
        {{"type", "object"},
         {"required", {"v", "type", "t", "lead"}},
         {"properties",
          {{"v", {{"const", kFeedSchemaVersion}}},
           {"type", {{"const", "lead"}}},
           {"t", {{"type", "number"}}},
           {"lead", {{"enum", {"human", "ai"}}}}}}}}}};

  return {{"version", 1}, {"config", config}, {"status", status}, {"feed", feed}};
}

struct Service::Impl {
  Runtime& runtime;
  ServiceOptions options;
  std::filesystem::path base_dir;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex write_mutex;  // serializes mutating requests

  Impl(Runtime& rt, ServiceOptions opts) : runtime(rt), options(std::move(opts)) {
    base_dir = options.config_path.parent_path();
    if (options.model_dir.empty()) options.model_dir = base_dir / "models";
    routes();
  }

  // Persists config, queues it and waits for the tick boundary. On failure the
  // previous file contents are restored.
  void commit(httplib::Response& res, const EngineConfig& config,
              std::shared_ptr<const MdrnnParams> model, json ok_body) {
    const bool had_file = std::filesystem::exists(options.config_path);
    const std::string previous = had_file ? read_bytes(options.config_path) : std::string();
    if (!options.config_path.empty()) {
      try {
        save_config_file(config, options.config_path);
      } catch (const std::exception& e) {
        reply(res, 500, error_body(std::string("cannot persist config: ") + e.what()));
        return;
      }
    }
    auto done = runtime.apply(config, std::move(model));
    if (done.wait_for(options.apply_timeout) != std::future_status::ready) {
      ok_body["applied"] = false;
      reply(res, 202, ok_body);
      return;
    }
    try {
      done.get();
    } catch (const std::exception& e) {
      if (!options.config_path.empty()) {
        if (had_file) {
          write_atomically(options.config_path, previous);
        } else {
          std::filesystem::remove(options.config_path);
        }
      }
      reply(res, 500, error_body(std::string("apply failed: ") + e.what()));
      return;
    }
    ok_body["applied"] = true;
    reply(res, 200, ok_body);
  }

  void routes() {
    server.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, to_json(runtime.status()));
    });

    server.Get("/api/schema", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, api_schema());
    });

    server.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, to_json(runtime.config()));
    });

    server.Put("/api/config", [this](const httplib::Request& req, httplib::Response& res) {
      json raw;
      try {
        raw = json::parse(req.body);
      } catch (const json::parse_error& e) {
        reply(res, 422, {{"violations", {std::string("malformed JSON: ") + e.what()}}});
        return;
      }
      EngineConfig config;
      try {
        config = validate_config(raw, {base_dir, true});
      } catch (const ConfigError& e) {
        reply(res, 422, {{"violations", e.violations()}});
        return;
      }
      std::lock_guard lock(write_mutex);
      const auto current = runtime.config();
      const auto model_path = resolve_path(base_dir, config.model_file);
      if (!std::filesystem::is_regular_file(model_path)) {
        reply(res, 409, error_body("model file not found: " + model_path.string()));
        return;
      }
      std::shared_ptr<const MdrnnParams> model;
      if (model_path != resolve_path(base_dir, current.model_file)) {
        try {
          model = std::make_shared<const MdrnnParams>(load_weights(model_path));
        } catch (const std::exception& e) {
          reply(res, 422, {{"violations", {std::string("model_file: ") + e.what()}}});
          return;
        }
        if (model->shape.dim != config.dimension) {
          reply(res, 422, {{"violations", {"model_file: dimension mismatch"}}});
          return;
        }
      }
      commit(res, config, std::move(model), to_json(config));
    });

    server.Get("/api/logs", [this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& path : list_sessions(runtime.log_dir())) {
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        list.push_back({{"session", path.filename().string()}, {"size", ec ? 0 : size}});
      }
      reply(res, 200, list);
    });

    server.Get(R"(/api/logs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      for (const auto& path : list_sessions(runtime.log_dir())) {
        if (path.filename().string() != name) continue;
        res.set_header("Content-Disposition", "attachment; filename=\"" + name + "\"");
        res.set_content(read_bytes(path), "text/csv");
        return;
      }
      reply(res, 404, error_body("unknown session: " + name));
    });

    server.Post("/api/model", [this](const httplib::Request& req, httplib::Response& res) {
      std::string bytes;
      std::string file_name;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("model")) {
          reply(res, 422, error_body("multipart field 'model' missing"));
          return;
        }
        const auto file = req.get_file_value("model");
        bytes = file.content;
        file_name = file.filename;
      } else {
        bytes = req.body;
      }
      MdrnnParams params;
      try {
        params = parse_weights(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
      } catch (const std::exception& e) {
        reply(res, 422, error_body(e.what()));
        return;
      }
      std::lock_guard lock(write_mutex);
      auto config = runtime.config();
      if (params.shape.dim != config.dimension) {
        reply(res, 422, error_body("dimension mismatch (model D=" + std::to_string(params.shape.dim) +
                                   ", config D=" + std::to_string(config.dimension) + ")"));
        return;
      }
      const auto dest = options.model_dir / sanitize_file_name(file_name);
      if (!write_atomically(dest, bytes)) {
        reply(res, 500, error_body("cannot write " + dest.string()));
        return;
      }
      std::error_code ec;
      auto relative = std::filesystem::relative(dest, base_dir.empty() ? "." : base_dir, ec);
      config.model_file = ec || relative.empty() ? dest.string() : relative.string();
      const auto& shape = params.shape;
      json body = {{"model_file", config.model_file},
                   {"shape", {{"dim", shape.dim}, {"layers", shape.layers}, {"units", shape.units},
                              {"mixtures", shape.mixtures}}}};
      commit(res, config, std::make_shared<const MdrnnParams>(std::move(params)), body);
    });

    if (!options.static_dir.empty() && std::filesystem::is_directory(options.static_dir)) {
      server.set_mount_point("/", options.static_dir.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kIndexPage, "text/html");
      });
    }
  }
};

Service::Service(Runtime& runtime, ServiceOptions options)
    : impl_(std::make_unique<Impl>(runtime, std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
  auto& s = *impl_;
  if (s.options.port == 0) {
    s.port = s.server.bind_to_any_port(s.options.host);
    if (s.port < 0) throw std::runtime_error("service: cannot bind " + s.options.host);
  } else {
    if (!s.server.bind_to_port(s.options.host, s.options.port)) {
      throw std::runtime_error("service: cannot bind " + s.options.host + ":" +
                               std::to_string(s.options.port));
    }
    s.port = s.options.port;
  }
  s.thread = std::thread([&s] { s.server.listen_after_bind(); });
  s.server.wait_until_ready();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Service::port() const { return impl_->port; }

}  // namespace impsy
