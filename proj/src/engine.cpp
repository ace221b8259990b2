#include "impsy/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace impsy {

namespace {

constexpr std::size_t kNoRoute = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kHistoryLimit = 4096;
// Tolerance on time comparisons so a trace sampled on a float grid switches
// exactly on the threshold tick.
constexpr double kTimeEpsilon = 1e-9;

Rng make_rng(const EngineConfig& config) {
  return Rng(config.rng_seed ? *config.rng_seed : entropy_seed());
}

}  // namespace

const char* to_string(Lead lead) { return lead == Lead::human ? "human" : "ai"; }

Engine::Engine(EngineConfig config, std::shared_ptr<const MdrnnParams> model, double start,
               TimeBase time_base, EngineObserver* observer, EngineOptions options)
    : config_(std::move(config)),
      model_(std::move(model)),
      time_base_(time_base),
      observer_(observer),
      options_(options),
      rng_(make_rng(config_)),
      last_human_at_(start),
      last_frame_at_(start),
      outbound_(config_) {
  if (!model_) throw std::invalid_argument("engine requires a model");
  if (model_->shape.dim != config_.dimension) {
    throw ShapeError("model dimension " + std::to_string(model_->shape.dim) +
                     " does not match config dimension " + std::to_string(config_.dimension));
  }
  options_.lookahead_frames = std::max(1, options_.lookahead_frames);
  options_.max_frames_per_tick = std::max(1, options_.max_frames_per_tick);
  composite_.values.assign(static_cast<std::size_t>(config_.dimension), 0.5);
  sounding_.assign(config_.outputs.size(), std::nullopt);
  reset_model();
  if (config_.interaction.mode == InteractionMode::ai_only) lead_ = Lead::ai;
}

void Engine::reset_model() {
  const auto initial = MdrnnState::initial(model_->shape);
  auto [mix, state] = forward_step(*model_, initial, encode_frame(initial.last_frame));
  state_ = std::move(state);
  next_mix_ = std::move(mix);
}

WallTime Engine::wall_time(double monotonic) const {
  const auto offset_ms = std::llround((monotonic - time_base_.monotonic) * 1000.0);
  return time_base_.wall + std::chrono::milliseconds(offset_ms);
}

std::size_t Engine::pending_messages() const {
  // Counted without touching the de-duplication state.
  OutboundRouter preview(config_);
  std::size_t n = 0;
  for (const auto& p : pending_) n += preview.route(p.frame, p.due).size();
  return n;
}

void Engine::set_lead(Lead lead, double at) {
  if (lead_ == lead) return;
  lead_ = lead;
  if (lead == Lead::ai) ai_cursor_.reset();
  if (observer_) observer_->on_lead_change(lead, at);
}

void Engine::log(Source source, double at, const std::vector<double>& values) {
  if (!observer_) return;
  observer_->on_record(LogRecord{wall_time(at), source, values});
}

void Engine::cancel_pending() {
  if (pending_.empty()) return;
  const auto& first = pending_.front().before;
  state_ = first.state;
  next_mix_ = first.next;
  last_frame_at_ = first.last_frame_at;
  counters_.ai_frames_cancelled += pending_.size();
  pending_.clear();
  ai_cursor_.reset();
}

void Engine::on_human_event(int dim, double value, double at) {
  if (dim < 0 || dim >= config_.dimension) {
    throw std::out_of_range("human event dimension " + std::to_string(dim) + " out of range");
  }
  ++counters_.human_events;
  if (config_.interaction.mode != InteractionMode::ai_only) cancel_pending();

  composite_.values[static_cast<std::size_t>(dim)] = std::clamp(value, 0.0, 1.0);
  ContinuousFrame frame = clamp_frame({composite_.values, at - last_frame_at_}, config_.dt_max);
  composite_.dt = frame.dt;
  try {
    auto [mix, state] = forward_step(*model_, state_, encode_frame(frame));
    state_ = std::move(state);
    state_.last_frame = frame;
    next_mix_ = std::move(mix);
  } catch (const std::exception& e) {
    if (observer_) observer_->on_error(std::string("conditioning failed: ") + e.what());
  }
  last_frame_at_ = std::max(last_frame_at_, at);
  last_human_at_ = at;
  log(Source::human, at, composite_.values);
  if (observer_) observer_->on_frame(frame, Source::human, at);
  if (config_.interaction.mode == InteractionMode::call_and_response) set_lead(Lead::human, at);
}

void Engine::generate(double now) {
  ModelSnapshot before{state_, next_mix_, last_frame_at_};
  try {
    ContinuousFrame frame = sample_frame(next_mix_, config_.sampling, config_.dt_max, rng_);
    auto [mix, state] = forward_step(*model_, state_, encode_frame(frame));
    // Chain onto the previous AI frame so timing does not drift by a tick per
    // frame, but never schedule from further back than one tick period.
    const double tick_period = 1.0 / config_.interaction.tick_hz;
    const double base = ai_cursor_ ? std::max(*ai_cursor_, now - tick_period) : now;
    const double due = base + frame.dt;
    state_ = std::move(state);
    state_.last_frame = frame;
    next_mix_ = std::move(mix);
    last_frame_at_ = due;
    ai_cursor_ = due;
    ++counters_.ai_frames_generated;
    pending_.push_back({due, std::move(frame), std::move(before)});
  } catch (const std::exception& e) {
    ++counters_.generation_failures;
    state_ = std::move(before.state);
    next_mix_ = std::move(before.next);
    if (observer_) observer_->on_error(std::string("generation failed: ") + e.what());
  }
}

void Engine::emit_frame(const PendingFrame& pending, std::vector<TimedMidi>& out) {
  std::vector<std::size_t> routes;
  auto messages = outbound_.route(pending.frame, pending.due, &routes);
  for (std::size_t i = 0; i < messages.size(); ++i) {
    auto& msg = messages[i];
    const std::size_t r = routes[i];
    if (msg.message.kind == MidiKind::note_on) {
      if (sounding_[r]) {
        // Retrigger: close the previous note on this route first.
        out.push_back({MidiMessage::note_off(msg.message.channel, *sounding_[r]), pending.due,
                       msg.device});
        std::erase_if(gates_, [r](const Gate& g) { return g.route == r; });
      }
      sounding_[r] = msg.message.data1;
      gates_.push_back({pending.due + config_.gate_s, r,
                        MidiMessage::note_off(msg.message.channel, msg.message.data1)});
    }
    out.push_back(std::move(msg));
  }
  counters_.messages_emitted += messages.size();
  ++counters_.ai_frames_emitted;
  composite_ = pending.frame;
  log(Source::ai, pending.due, pending.frame.values);
  if (observer_) observer_->on_frame(pending.frame, Source::ai, pending.due);
  emitted_history_.emplace_back(pending.due, pending.frame);
  if (emitted_history_.size() > kHistoryLimit) emitted_history_.pop_front();
}

std::vector<TimedMidi> Engine::tick(double now) {
  std::vector<TimedMidi> out;

  switch (config_.interaction.mode) {
    case InteractionMode::ai_only:
      set_lead(Lead::ai, now);
      break;
    case InteractionMode::human_only:
      set_lead(Lead::human, now);
      cancel_pending();
      break;
    case InteractionMode::call_and_response:
      if (lead_ == Lead::human &&
          now - last_human_at_ >= config_.interaction.switchover_s - kTimeEpsilon) {
        set_lead(Lead::ai, now);
      }
      break;
  }

  int generated = 0;
  while (true) {
    while (lead_ == Lead::ai && pending_.size() < static_cast<std::size_t>(options_.lookahead_frames) &&
           generated < options_.max_frames_per_tick) {
      const auto before = counters_.ai_frames_generated;
      generate(now);
      ++generated;
      if (counters_.ai_frames_generated == before) break;  // failed; retry next tick
    }
    bool emitted = false;
    while (!pending_.empty() && pending_.front().due <= now + kTimeEpsilon) {
      emit_frame(pending_.front(), out);
      pending_.pop_front();
      emitted = true;
    }
    if (!emitted || generated >= options_.max_frames_per_tick) break;
  }

  // Note-offs for gates that have expired.
  std::sort(gates_.begin(), gates_.end(), [](const Gate& a, const Gate& b) { return a.due < b.due; });
  auto expired = gates_.begin();
  while (expired != gates_.end() && expired->due <= now + kTimeEpsilon) ++expired;
  for (auto it = gates_.begin(); it != expired; ++it) {
    std::string device;
    if (it->route != kNoRoute && it->route < config_.outputs.size()) {
      device = config_.outputs[it->route].device;
      sounding_[it->route].reset();
    }
    out.push_back({it->off, it->due, device});
  }
  gates_.erase(gates_.begin(), expired);

  std::stable_sort(out.begin(), out.end(),
                   [](const TimedMidi& a, const TimedMidi& b) { return a.at < b.at; });
  return out;
}

void Engine::apply_config(const EngineConfig& config) {
  const bool dimension_changed = config.dimension != config_.dimension;
  if (dimension_changed && model_->shape.dim != config.dimension) {
    throw ShapeError("config dimension does not match the loaded model; swap the model too");
  }
  config_ = config;
  outbound_ = OutboundRouter(config_);
  // Existing gates still close their notes, but no longer track a route slot.
  for (auto& g : gates_) g.route = kNoRoute;
  sounding_.assign(config_.outputs.size(), std::nullopt);
  if (config_.interaction.mode == InteractionMode::human_only) cancel_pending();
}

void Engine::swap_model(std::shared_ptr<const MdrnnParams> model) {
  if (!model) throw std::invalid_argument("engine requires a model");
  if (model->shape.dim != config_.dimension) {
    throw ShapeError("model dimension " + std::to_string(model->shape.dim) +
                     " does not match config dimension " + std::to_string(config_.dimension));
  }
  pending_.clear();
  ai_cursor_.reset();
  model_ = std::move(model);
  reset_model();
}

}  // namespace impsy
