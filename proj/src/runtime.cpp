#include "impsy/runtime.hpp"

#include <chrono>

namespace impsy {

namespace {

std::set<std::string> input_selectors(const EngineConfig& config) {
  std::set<std::string> s;
  for (const auto& r : config.inputs) s.insert(r.device);
  return s;
}

std::set<std::string> output_selectors(const EngineConfig& config) {
  std::set<std::string> s;
  for (const auto& r : config.outputs) s.insert(r.device);
  if (config.passthrough) s.insert(*config.passthrough);
  return s;
}

}  // namespace

nlohmann::json to_json(const StatusSnapshot& s) {
  return {
      {"version", 1},
      {"state", s.running ? "running" : "stopped"},
      {"lead", to_string(s.lead)},
      {"dimension", s.dimension},
      {"mode", s.mode},
      {"switchover_s", s.switchover_s},
      {"model_file", s.model_file},
      {"uptime_s", s.uptime_s},
      {"last_second", {{"human_events", s.human_events_1s}, {"ai_frames", s.ai_frames_1s},
                       {"midi_messages", s.messages_1s}}},
      {"totals", {{"human_events", s.engine.human_events},
                  {"ai_frames_generated", s.engine.ai_frames_generated},
                  {"ai_frames_emitted", s.engine.ai_frames_emitted},
                  {"ai_frames_cancelled", s.engine.ai_frames_cancelled},
                  {"midi_messages", s.engine.messages_emitted},
                  {"generation_failures", s.engine.generation_failures},
                  {"ingest_dropped", s.ingest_dropped},
                  {"output_failures", s.output_failures}}},
      {"routing", {{"received", s.routing.received}, {"matched", s.routing.matched},
                   {"passed_through", s.routing.passed_through}, {"dropped", s.routing.dropped}}},
      {"log", {{"enabled", s.log_enabled}, {"file", s.log_file}, {"written", s.log_written},
               {"dropped", s.log_dropped}}},
      {"net", {{"posted", s.net.posted}, {"dropped", s.net.dropped}, {"osc_sent", s.net.osc_sent},
               {"osc_errors", s.net.osc_errors}, {"ws_clients", s.net.ws_clients},
               {"ws_messages", s.net.ws_messages}}},
      {"values", s.values},
      {"disconnected", s.disconnected},
      {"missing_devices", s.missing_devices},
      {"last_error", s.last_error},
  };
}

Runtime::Runtime(EngineConfig config, std::shared_ptr<const MdrnnParams> model, MidiBackend& backend,
                 RuntimeOptions options, ClockFn clock)
    : clock_(std::move(clock)),
      backend_(backend),
      options_(std::move(options)),
      started_at_(clock_()),
      engine_config_(config),
      inbound_(engine_config_),
      log_(options_.log_capacity) {
  TimeBase base{started_at_, options_.wall_origin
                                 ? *options_.wall_origin
                                 : std::chrono::time_point_cast<std::chrono::milliseconds>(
                                       std::chrono::system_clock::now())};
  engine_ = std::make_unique<Engine>(config, model, started_at_, base, static_cast<EngineObserver*>(this),
                                     options_.engine);
  if (options_.logging) log_.rotate(resolve_path(options_.base_dir, config.log_dir), config.dimension, base.wall);
  net_ = std::make_unique<NetEmitter>(config.net, options_.net_capacity);
  ws_port_ = net_->websocket_port();
  published_config_ = config;
  published_model_ = model;
  publish(started_at_);
}

Runtime::~Runtime() {
  stop();
  std::lock_guard lock(devices_mutex_);
  inputs_.clear();  // stop input callbacks before the queues go away
  outputs_.clear();
}

std::filesystem::path Runtime::log_dir() const {
  std::lock_guard lock(status_mutex_);
  return resolve_path(options_.base_dir, published_config_.log_dir);
}

void Runtime::open_devices(bool strict) {
  std::lock_guard lock(devices_mutex_);
  open_devices_locked(engine_config_, strict);
}

void Runtime::open_devices_locked(const EngineConfig& config, bool strict) {
  inputs_.clear();
  outputs_.clear();
  missing_devices_.clear();
  const auto names = backend_.list_devices();

  std::set<std::string> input_names;
  for (const auto& selector : input_selectors(config)) {
    if (selector.empty()) {
      input_names.insert(names.begin(), names.end());
      continue;
    }
    try {
      input_names.insert(select_device(selector, names));
    } catch (const DeviceNotFound&) {
      if (strict) throw;
      missing_devices_.insert(selector);
    }
  }
  for (const auto& name : input_names) {
    try {
      inputs_.push_back(backend_.open_input(name, [this](const MidiInputEvent& e) { handle_input(e); }));
    } catch (const DeviceNotFound&) {
      if (strict) throw;
      missing_devices_.insert(name);
    }
  }

  for (const auto& selector : output_selectors(config)) {
    try {
      std::string target = selector;
      if (selector.empty()) {
        if (names.empty()) throw DeviceNotFound(selector, names);
        target = names.front();
      }
      outputs_[selector] = backend_.open_output(target);
    } catch (const DeviceNotFound&) {
      if (strict) throw;
      missing_devices_.insert(selector);
    }
  }
}

void Runtime::handle_input(const MidiInputEvent& event) {
  if (const auto* end = std::get_if<StreamEnd>(&event)) {
    std::lock_guard lock(status_mutex_);
    disconnected_.insert(end->device);
    return;
  }
  ingest(std::get<TimedMidi>(event));
}

bool Runtime::ingest(const TimedMidi& message) {
  std::lock_guard lock(ingest_mutex_);
  if (ingest_.size() >= options_.ingest_capacity) {
    ++ingest_dropped_;
    return false;
  }
  ingest_.push_back(message);
  return true;
}

std::future<void> Runtime::apply(EngineConfig config, std::shared_ptr<const MdrnnParams> model) {
  std::lock_guard lock(apply_mutex_);
  applies_.push_back({std::move(config), std::move(model), {}});
  return applies_.back().done.get_future();
}

void Runtime::process_applies() {
  std::deque<ApplyRequest> requests;
  {
    std::lock_guard lock(apply_mutex_);
    requests.swap(applies_);
  }
  for (auto& req : requests) {
    try {
      const auto previous = engine_config_;
      auto model = req.model ? req.model : engine_->model();
      if (req.model) engine_->swap_model(req.model);
      engine_->apply_config(req.config);
      engine_config_ = req.config;
      inbound_.set_config(engine_config_);
      if (input_selectors(previous) != input_selectors(req.config) ||
          output_selectors(previous) != output_selectors(req.config)) {
        std::lock_guard lock(devices_mutex_);
        open_devices_locked(engine_config_, false);
      }
      if (!(previous.net == req.config.net)) {
        net_.reset();
        net_ = std::make_unique<NetEmitter>(req.config.net, options_.net_capacity);
        ws_port_ = net_->websocket_port();
      }
      if (options_.logging &&
          (previous.dimension != req.config.dimension || previous.log_dir != req.config.log_dir)) {
        log_.rotate(resolve_path(options_.base_dir, req.config.log_dir), req.config.dimension,
                    engine_->wall_time(clock_()));
      }
      {
        std::lock_guard lock(status_mutex_);
        published_config_ = engine_config_;
        published_model_ = model;
      }
      req.done.set_value();
    } catch (...) {
      req.done.set_exception(std::current_exception());
    }
  }
}

void Runtime::send(const TimedMidi& message) {
  std::lock_guard lock(devices_mutex_);
  const auto it = outputs_.find(message.device);
  if (it == outputs_.end() || !it->second->send(message.message)) ++output_failures_;
}

void Runtime::on_record(const LogRecord& record) {
  if (options_.logging) log_.post(record);
}

void Runtime::on_frame(const ContinuousFrame& frame, Source source, double at) {
  recent_frames_.emplace_back(at, source);
  net_->post_frame(frame, source, engine_->wall_time(at));
}

void Runtime::on_lead_change(Lead lead, double at) {
  net_->post_lead(lead == Lead::ai ? Source::ai : Source::human, engine_->wall_time(at));
}

void Runtime::on_error(const std::string& message) { last_error_ = message; }

void Runtime::step(double now) {
  process_applies();

  std::deque<TimedMidi> batch;
  {
    std::lock_guard lock(ingest_mutex_);
    batch.swap(ingest_);
  }
  for (const auto& message : batch) {
    const auto result = inbound_.route(message);
    if (result.event) engine_->on_human_event(result.event->dim, result.event->value, result.event->at);
    if (result.passthrough) send(*result.passthrough);
  }

  const auto out = engine_->tick(now);
  for (const auto& m : out) send(m);
  if (!out.empty()) recent_messages_.emplace_back(now, out.size());
  publish(now);
}

void Runtime::publish(double now) {
  while (!recent_frames_.empty() && recent_frames_.front().first < now - 1.0) recent_frames_.pop_front();
  while (!recent_messages_.empty() && recent_messages_.front().first < now - 1.0) {
    recent_messages_.pop_front();
  }
  StatusSnapshot s;
  s.running = running_.load();
  s.lead = engine_->lead();
  s.dimension = engine_config_.dimension;
  s.mode = to_string(engine_config_.interaction.mode);
  s.switchover_s = engine_config_.interaction.switchover_s;
  s.model_file = engine_config_.model_file;
  s.uptime_s = now - started_at_;
  for (const auto& [at, source] : recent_frames_) {
    if (at > now) continue;
    if (source == Source::human) {
      ++s.human_events_1s;
    } else {
      ++s.ai_frames_1s;
    }
  }
  for (const auto& [at, n] : recent_messages_) s.messages_1s += n;
  s.engine = engine_->counters();
  s.routing = inbound_.counters();
  {
    std::lock_guard lock(ingest_mutex_);
    s.ingest_dropped = ingest_dropped_;
  }
  s.output_failures = output_failures_;
  s.log_written = log_.written();
  s.log_dropped = log_.dropped();
  s.log_enabled = log_.enabled();
  s.log_file = options_.logging ? log_.path().filename().string() : "";
  s.net = net_->counters();
  s.values = engine_->composite().values;
  s.last_error = last_error_;
  {
    std::lock_guard lock(devices_mutex_);
    s.missing_devices.assign(missing_devices_.begin(), missing_devices_.end());
  }
  std::lock_guard lock(status_mutex_);
  s.disconnected.assign(disconnected_.begin(), disconnected_.end());
  status_ = std::move(s);
}

StatusSnapshot Runtime::status() const {
  std::lock_guard lock(status_mutex_);
  auto s = status_;
  s.running = running_.load();
  return s;
}

EngineConfig Runtime::config() const {
  std::lock_guard lock(status_mutex_);
  return published_config_;
}

std::shared_ptr<const MdrnnParams> Runtime::model() const {
  std::lock_guard lock(status_mutex_);
  return published_model_;
}

int Runtime::websocket_port() const { return ws_port_.load(); }

void Runtime::flush_outputs() {
  log_.drain();
  if (!running_) net_->flush();
}

void Runtime::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] { loop(); });
}

void Runtime::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
  log_.drain();
}

void Runtime::loop() {
  using clock = std::chrono::steady_clock;
  auto deadline = clock::now();
  while (running_.load()) {
    try {
      step(clock_());
    } catch (const std::exception& e) {
      last_error_ = e.what();
    }
    const double hz = engine_config_.interaction.tick_hz > 0 ? engine_config_.interaction.tick_hz : 100.0;
    deadline += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / hz));
    const auto now = clock::now();
    // After a stall, resume from now instead of bursting through missed ticks.
    if (deadline < now) deadline = now;
    std::this_thread::sleep_until(deadline);
  }
}

}  // namespace impsy
