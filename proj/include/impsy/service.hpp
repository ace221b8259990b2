#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "impsy/runtime.hpp"

namespace impsy {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8000;  // 0 picks a free port
  // The config document PUT /api/config persists to. Its directory is the
  // base for relative paths.
  std::filesystem::path config_path;
  // Uploaded models land here; defaults to <config dir>/models.
  std::filesystem::path model_dir;
  // Built web UI; a small index page is served when absent.
  std::filesystem::path static_dir;
  // How long a mutating request waits for the engine to reach a tick boundary.
  std::chrono::milliseconds apply_timeout{2000};
};

/// JSON schemas for the config document, the status document and the feed.
nlohmann::json api_schema();

/// HTTP/JSON API in front of a Runtime. Handlers never touch the engine; they
/// read published snapshots and queue apply requests.
class Service {
 public:
  Service(Runtime& runtime, ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Throws when the port is taken.
  void start();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace impsy
