#include "impsy/midi_device.hpp"

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <regex>
#include <thread>

namespace impsy {

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

namespace {

std::string describe(const std::string& selector, const std::vector<std::string>& candidates) {
  std::string msg = "MIDI device not found: '" + selector + "'; available:";
  if (candidates.empty()) msg += " (none)";
  for (const auto& c : candidates) msg += " '" + c + "'";
  return msg;
}

}  // namespace

DeviceNotFound::DeviceNotFound(const std::string& selector, std::vector<std::string> candidates)
    : std::runtime_error(describe(selector, candidates)), candidates_(std::move(candidates)) {}

std::string select_device(const std::string& selector, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (n == selector) return n;
  }
  for (const auto& n : names) {
    if (!selector.empty() && n.find(selector) != std::string::npos) return n;
  }
  throw DeviceNotFound(selector, names);
}

bool selector_matches(const std::string& selector, const std::string& name) {
  return selector.empty() || name == selector || name.find(selector) != std::string::npos;
}

// Virtual backend --------------------------------------------------------------

VirtualMidiBackend::Device::Device(std::string name, bool loopback, ClockFn clock)
    : name_(std::move(name)), loopback_(loopback), clock_(std::move(clock)) {}

void VirtualMidiBackend::Device::inject(std::span<const std::uint8_t> bytes) {
  if (!connected_) return;
  std::vector<std::pair<MidiInputCallback, std::vector<MidiMessage>>> deliveries;
  double at = 0.0;
  {
    std::lock_guard lock(mutex_);
    at = clock_();
    for (auto& sub : subscribers_) {
      deliveries.emplace_back(sub.callback, sub.parser.feed(bytes));
    }
  }
  for (auto& [callback, messages] : deliveries) {
    for (auto& m : messages) callback(TimedMidi{std::move(m), at, name_});
  }
}

void VirtualMidiBackend::Device::inject(const MidiMessage& message) { inject(serialize(message)); }

std::vector<std::uint8_t> VirtualMidiBackend::Device::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

std::vector<MidiMessage> VirtualMidiBackend::Device::received_messages() const {
  return parse_stream(received());
}

void VirtualMidiBackend::Device::clear_received() {
  std::lock_guard lock(mutex_);
  received_.clear();
}

void VirtualMidiBackend::Device::disconnect() {
  if (!connected_.exchange(false)) return;
  std::vector<MidiInputCallback> callbacks;
  double at = 0.0;
  {
    std::lock_guard lock(mutex_);
    at = clock_();
    for (auto& sub : subscribers_) callbacks.push_back(sub.callback);
  }
  for (auto& cb : callbacks) cb(StreamEnd{name_, at});
}

int VirtualMidiBackend::Device::subscribe(MidiInputCallback callback) {
  std::lock_guard lock(mutex_);
  subscribers_.push_back({next_id_, MidiParser{}, std::move(callback)});
  return next_id_++;
}

void VirtualMidiBackend::Device::unsubscribe(int id) {
  std::lock_guard lock(mutex_);
  std::erase_if(subscribers_, [id](const Subscriber& s) { return s.id == id; });
}

bool VirtualMidiBackend::Device::write_from_host(std::span<const std::uint8_t> bytes) {
  if (!connected_) return false;
  {
    std::lock_guard lock(mutex_);
    received_.insert(received_.end(), bytes.begin(), bytes.end());
  }
  if (loopback_) inject(bytes);
  return true;
}

namespace {

class VirtualInput : public MidiInput {
 public:
  VirtualInput(std::shared_ptr<VirtualMidiBackend::Device> device, MidiInputCallback callback)
      : device_(std::move(device)) {
    id_ = device_->subscribe(std::move(callback));
  }
  ~VirtualInput() override { device_->unsubscribe(id_); }

  const std::string& name() const override { return device_->name(); }
  bool connected() const override { return device_->connected(); }

 private:
  std::shared_ptr<VirtualMidiBackend::Device> device_;
  int id_ = 0;
};

class VirtualOutput : public MidiOutput {
 public:
  explicit VirtualOutput(std::shared_ptr<VirtualMidiBackend::Device> device)
      : device_(std::move(device)) {}

  const std::string& name() const override { return device_->name(); }

  bool send(const MidiMessage& message) override {
    std::lock_guard lock(mutex_);
    return device_->write_from_host(serialize(message));
  }

 private:
  std::shared_ptr<VirtualMidiBackend::Device> device_;
  std::mutex mutex_;
};

}  // namespace

VirtualMidiBackend::VirtualMidiBackend(ClockFn clock) : clock_(std::move(clock)) {}

VirtualMidiBackend::~VirtualMidiBackend() = default;

std::shared_ptr<VirtualMidiBackend::Device> VirtualMidiBackend::create_device(
    const std::string& name, bool loopback) {
  std::lock_guard lock(mutex_);
  auto& slot = devices_[name];
  if (!slot) slot = std::make_shared<Device>(name, loopback, clock_);
  return slot;
}

std::shared_ptr<VirtualMidiBackend::Device> VirtualMidiBackend::device(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = devices_.find(name);
  return it == devices_.end() ? nullptr : it->second;
}

std::vector<std::string> VirtualMidiBackend::list_devices() {
  std::lock_guard lock(mutex_);
  std::vector<std::string> names;
  for (const auto& [name, dev] : devices_) {
    if (dev->connected()) names.push_back(name);
  }
  return names;
}

std::unique_ptr<MidiInput> VirtualMidiBackend::open_input(const std::string& selector,
                                                          MidiInputCallback callback) {
  const auto name = select_device(selector, list_devices());
  return std::make_unique<VirtualInput>(device(name), std::move(callback));
}

std::unique_ptr<MidiOutput> VirtualMidiBackend::open_output(const std::string& selector) {
  const auto name = select_device(selector, list_devices());
  return std::make_unique<VirtualOutput>(device(name));
}

// Raw device backend -----------------------------------------------------------

std::string raw_device_path(const std::string& name) {
  const auto open = name.rfind('(');
  if (open != std::string::npos && name.back() == ')') {
    return name.substr(open + 1, name.size() - open - 2);
  }
  return name;
}

namespace {

std::string card_id(int card) {
  std::ifstream in("/proc/asound/card" + std::to_string(card) + "/id");
  std::string id;
  std::getline(in, id);
  return id;
}

class RawInput : public MidiInput {
 public:
  RawInput(std::string name, int fd, MidiInputCallback callback, ClockFn clock)
      : name_(std::move(name)), fd_(fd), callback_(std::move(callback)), clock_(std::move(clock)) {
    reader_ = std::thread([this] { run(); });
  }

  ~RawInput() override {
    stop_ = true;
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
  }

  const std::string& name() const override { return name_; }
  bool connected() const override { return connected_.load(); }

 private:
  void run() {
    MidiParser parser;
    std::vector<std::uint8_t> buffer(256);
    std::vector<MidiMessage> messages;
    while (!stop_) {
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready < 0 && errno == EINTR) continue;
      if (ready < 0 || (pfd.revents & (POLLERR | POLLHUP | POLLNVAL))) break;
      if (ready == 0) continue;
      const ssize_t n = ::read(fd_, buffer.data(), buffer.size());
      if (n < 0 && (errno == EAGAIN || errno == EINTR)) continue;
      if (n <= 0) break;
      const double at = clock_();
      messages.clear();
      parser.feed(std::span(buffer.data(), static_cast<std::size_t>(n)), messages);
      for (auto& m : messages) callback_(TimedMidi{std::move(m), at, name_});
    }
    connected_ = false;
    if (!stop_) callback_(StreamEnd{name_, clock_()});
  }

  std::string name_;
  int fd_;
  MidiInputCallback callback_;
  ClockFn clock_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> connected_{true};
  std::thread reader_;
};

class RawOutput : public MidiOutput {
 public:
  RawOutput(std::string name, int fd) : name_(std::move(name)), fd_(fd) {}
  ~RawOutput() override { ::close(fd_); }

  const std::string& name() const override { return name_; }

  bool send(const MidiMessage& message) override {
    const auto bytes = serialize(message);
    std::lock_guard lock(mutex_);
    std::size_t written = 0;
    while (written < bytes.size()) {
      const ssize_t n = ::write(fd_, bytes.data() + written, bytes.size() - written);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      written += static_cast<std::size_t>(n);
    }
    return true;
  }

 private:
  std::string name_;
  int fd_;
  std::mutex mutex_;
};

}  // namespace

RawMidiBackend::RawMidiBackend(ClockFn clock) : clock_(std::move(clock)) {}

std::vector<std::string> RawMidiBackend::list_devices() {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  std::error_code ec;
  const std::regex rawmidi(R"(midiC(\d+)D(\d+))");
  if (fs::is_directory("/dev/snd", ec)) {
    for (const auto& entry : fs::directory_iterator("/dev/snd", ec)) {
      const auto file = entry.path().filename().string();
      std::smatch match;
      if (!std::regex_match(file, match, rawmidi)) continue;
      const auto id = card_id(std::stoi(match[1]));
      names.push_back((id.empty() ? file : id) + " (" + entry.path().string() + ")");
    }
  }
  for (const auto& entry : fs::directory_iterator("/dev", ec)) {
    const auto file = entry.path().filename().string();
    if (file.rfind("midi", 0) == 0) names.push_back(file + " (" + entry.path().string() + ")");
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::string RawMidiBackend::resolve(const std::string& selector) {
  if (selector.rfind("/dev/", 0) == 0 && std::filesystem::exists(selector)) return selector;
  return select_device(selector, list_devices());
}

std::unique_ptr<MidiInput> RawMidiBackend::open_input(const std::string& selector,
                                                      MidiInputCallback callback) {
  const auto name = resolve(selector);
  const int fd = ::open(raw_device_path(name).c_str(), O_RDONLY | O_NONBLOCK);
  if (fd < 0) throw DeviceNotFound(selector, list_devices());
  return std::make_unique<RawInput>(name, fd, std::move(callback), clock_);
}

std::unique_ptr<MidiOutput> RawMidiBackend::open_output(const std::string& selector) {
  const auto name = resolve(selector);
  const int fd = ::open(raw_device_path(name).c_str(), O_WRONLY);
  if (fd < 0) throw DeviceNotFound(selector, list_devices());
  return std::make_unique<RawOutput>(name, fd);
}

}  // namespace impsy
