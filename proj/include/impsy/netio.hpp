#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "impsy/config.hpp"
#include "impsy/frame.hpp"
#include "impsy/session_log.hpp"

namespace impsy {

class OscError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// OSC 1.0 message with float32 arguments only.
std::vector<std::uint8_t> osc_encode(std::string_view address, std::span<const float> args);

inline constexpr const char* kOscFrameAddress = "/impsy/frame";
inline constexpr const char* kOscLeadAddress = "/impsy/lead";  // 0 = human, 1 = ai
inline constexpr int kFeedSchemaVersion = 1;

/// One line of the WebSocket feed:
/// {"v":1,"type":"frame","t":<epoch seconds>,"source":"human|ai","values":[...],"dt":<s>}
std::string feed_frame_json(const ContinuousFrame& frame, Source source, WallTime at);
/// {"v":1,"type":"lead","t":<epoch seconds>,"lead":"human|ai"}
std::string feed_lead_json(Source lead, WallTime at);

/// Fire-and-forget UDP datagrams on a non-blocking socket.
class UdpSender {
 public:
  UdpSender(const std::string& host, int port);
  ~UdpSender();
  UdpSender(const UdpSender&) = delete;
  UdpSender& operator=(const UdpSender&) = delete;

  bool send(std::span<const std::uint8_t> datagram);
  bool ok() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

/// Accept key for the WebSocket opening handshake.
std::string websocket_accept_key(std::string_view client_key);

/// Broadcast-only WebSocket server. Client messages are read and ignored
/// apart from close and ping. A client whose socket cannot take a whole frame
/// without blocking is disconnected.
class WebSocketServer {
 public:
  WebSocketServer(const std::string& host, int port);
  ~WebSocketServer();
  WebSocketServer(const WebSocketServer&) = delete;
  WebSocketServer& operator=(const WebSocketServer&) = delete;

  int port() const { return port_; }
  std::size_t clients() const;
  /// Returns the number of clients the frame was written to.
  std::size_t broadcast(std::string_view text);
  std::uint64_t disconnects() const { return disconnects_; }

 private:
  struct Client {
    int fd;
    bool open;
    std::string inbox;
  };

  void run();
  void accept_client();
  bool read_client(Client& client);
  bool send_all_nonblocking(int fd, std::string_view bytes);

  int listen_fd_ = -1;
  int wake_fd_[2] = {-1, -1};
  int port_ = 0;
  mutable std::mutex mutex_;
  std::vector<Client> clients_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> disconnects_{0};
  std::thread worker_;
};

struct NetCounters {
  std::uint64_t posted = 0;
  std::uint64_t dropped = 0;
  std::uint64_t osc_sent = 0;
  std::uint64_t osc_errors = 0;
  std::uint64_t ws_messages = 0;
  std::uint64_t ws_clients = 0;
  std::uint64_t ws_disconnects = 0;
};

/// Owns the configured sinks and a worker thread. post_* never blocks; when
/// the queue is full the oldest item is dropped and counted.
class NetEmitter {
 public:
  explicit NetEmitter(const NetConfig& config, std::size_t capacity = 1024);
  ~NetEmitter();
  NetEmitter(const NetEmitter&) = delete;
  NetEmitter& operator=(const NetEmitter&) = delete;

  bool active() const { return osc_ || ws_; }
  void post_frame(const ContinuousFrame& frame, Source source, WallTime at);
  void post_lead(Source lead, WallTime at);
  /// Waits until the queue has been processed.
  void flush();
  NetCounters counters() const;
  int websocket_port() const { return ws_ ? ws_->port() : 0; }

 private:
  struct Item {
    bool lead = false;
    ContinuousFrame frame;
    Source source = Source::human;
    WallTime at{};
  };

  void post(Item item);
  void run();

  std::unique_ptr<UdpSender> osc_;
  std::unique_ptr<WebSocketServer> ws_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<Item> queue_;
  bool busy_ = false;
  bool stop_ = false;
  NetCounters counters_;
  std::thread worker_;
};

}  // namespace impsy
