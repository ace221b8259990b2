#include "impsy/netio.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cerrno>
#include <cstring>

#include <json.hpp>

namespace impsy {

namespace {

void pad4(std::vector<std::uint8_t>& out) {
  do {
    out.push_back(0);
  } while (out.size() % 4 != 0);
}

double epoch_seconds(WallTime at) {
  return static_cast<double>(at.time_since_epoch().count()) / 1000.0;
}

bool resolve(const std::string& host, int port, int socktype, sockaddr_storage& addr, socklen_t& len) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = socktype;
  addrinfo* result = nullptr;
  const auto service = std::to_string(port);
  if (getaddrinfo(host.c_str(), service.c_str(), &hints, &result) != 0 || !result) return false;
  std::memcpy(&addr, result->ai_addr, result->ai_addrlen);
  len = result->ai_addrlen;
  freeaddrinfo(result);
  return true;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string ws_frame(std::uint8_t opcode, std::string_view payload) {
  std::string frame;
  frame.push_back(static_cast<char>(0x80 | opcode));
  const auto n = payload.size();
  if (n < 126) {
    frame.push_back(static_cast<char>(n));
  } else if (n < 65536) {
    frame.push_back(126);
    frame.push_back(static_cast<char>((n >> 8) & 0xFF));
    frame.push_back(static_cast<char>(n & 0xFF));
  } else {
    frame.push_back(127);
    for (int shift = 56; shift >= 0; shift -= 8) frame.push_back(static_cast<char>((n >> shift) & 0xFF));
  }
  frame.append(payload);
  return frame;
}

}  // namespace

std::vector<std::uint8_t> osc_encode(std::string_view address, std::span<const float> args) {
  if (address.empty() || address.front() != '/') throw OscError("OSC address must begin with '/'");
  if (address.find('\0') != std::string_view::npos) throw OscError("OSC address contains NUL");
  std::vector<std::uint8_t> out(address.begin(), address.end());
  pad4(out);
  out.push_back(',');
  out.insert(out.end(), args.size(), 'f');
  pad4(out);
  for (float f : args) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(bits >> shift));
  }
  return out;
}

std::string feed_frame_json(const ContinuousFrame& frame, Source source, WallTime at) {
  nlohmann::json j{{"v", kFeedSchemaVersion}, {"type", "frame"}, {"t", epoch_seconds(at)},
                   {"source", to_string(source)}, {"values", frame.values}, {"dt", frame.dt}};
  return j.dump();
}

std::string feed_lead_json(Source lead, WallTime at) {
  nlohmann::json j{{"v", kFeedSchemaVersion}, {"type", "lead"}, {"t", epoch_seconds(at)},
                   {"lead", to_string(lead)}};
  return j.dump();
}

// UdpSender ------------------------------------------------------------------

UdpSender::UdpSender(const std::string& host, int port) {
  sockaddr_storage addr{};
  socklen_t len = 0;
  if (!resolve(host, port, SOCK_DGRAM, addr, len)) return;
  fd_ = ::socket(addr.ss_family, SOCK_DGRAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd_ < 0) return;
  // Connected so that ICMP port-unreachable surfaces as a send error.
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), len) != 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

UdpSender::~UdpSender() {
  if (fd_ >= 0) ::close(fd_);
}

bool UdpSender::send(std::span<const std::uint8_t> datagram) {
  if (fd_ < 0) return false;
  const auto n = ::send(fd_, datagram.data(), datagram.size(), MSG_DONTWAIT | MSG_NOSIGNAL);
  return n == static_cast<ssize_t>(datagram.size());
}

// WebSocketServer ------------------------------------------------------------

std::string websocket_accept_key(std::string_view client_key) {
  std::string input(client_key);
  input += "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(input.data()), input.size(), digest);
  unsigned char encoded[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(encoded, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(encoded), static_cast<std::size_t>(n));
}

WebSocketServer::WebSocketServer(const std::string& host, int port) {
  sockaddr_storage addr{};
  socklen_t len = 0;
  if (!resolve(host, port, SOCK_STREAM, addr, len)) {
    throw std::runtime_error("websocket: cannot resolve " + host);
  }
  listen_fd_ = ::socket(addr.ss_family, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw std::runtime_error("websocket: socket() failed");
  int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), len) != 0 || ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("websocket: cannot listen on " + host + ":" + std::to_string(port));
  }
  sockaddr_storage bound{};
  socklen_t bound_len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &bound_len);
  port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                      : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  if (::pipe2(wake_fd_, O_NONBLOCK | O_CLOEXEC) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("websocket: pipe() failed");
  }
  worker_ = std::thread([this] { run(); });
}

WebSocketServer::~WebSocketServer() {
  stop_ = true;
  const char byte = 0;
  [[maybe_unused]] auto n = ::write(wake_fd_[1], &byte, 1);
  if (worker_.joinable()) worker_.join();
  for (auto& c : clients_) ::close(c.fd);
  ::close(listen_fd_);
  ::close(wake_fd_[0]);
  ::close(wake_fd_[1]);
}

std::size_t WebSocketServer::clients() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(
      std::count_if(clients_.begin(), clients_.end(), [](const Client& c) { return c.open; }));
}

bool WebSocketServer::send_all_nonblocking(int fd, std::string_view bytes) {
  const auto n = ::send(fd, bytes.data(), bytes.size(), MSG_DONTWAIT | MSG_NOSIGNAL);
  return n == static_cast<ssize_t>(bytes.size());
}

std::size_t WebSocketServer::broadcast(std::string_view text) {
  const auto frame = ws_frame(0x1, text);
  std::lock_guard lock(mutex_);
  std::size_t sent = 0;
  for (auto it = clients_.begin(); it != clients_.end();) {
    if (!it->open) {
      ++it;
      continue;
    }
    if (send_all_nonblocking(it->fd, frame)) {
      ++sent;
      ++it;
    } else {
      // Too slow or gone; a partial frame would corrupt the stream anyway.
      ::close(it->fd);
      it = clients_.erase(it);
      ++disconnects_;
    }
  }
  return sent;
}

void WebSocketServer::accept_client() {
  while (true) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
    if (fd < 0) return;
    std::lock_guard lock(mutex_);
    clients_.push_back({fd, false, {}});
  }
}

// Returns false when the client should be dropped. Called with mutex_ held.
bool WebSocketServer::read_client(Client& client) {
  char buf[4096];
  const auto n = ::recv(client.fd, buf, sizeof buf, MSG_DONTWAIT);
  if (n == 0) return false;
  if (n < 0) return errno == EAGAIN || errno == EWOULDBLOCK;
  client.inbox.append(buf, static_cast<std::size_t>(n));

  if (!client.open) {
    const auto end = client.inbox.find("\r\n\r\n");
    if (end == std::string::npos) return client.inbox.size() < 16384;
    const auto head = client.inbox.substr(0, end);
    client.inbox.erase(0, end + 4);
    std::string key;
    std::size_t pos = 0;
    while (pos < head.size()) {
      auto eol = head.find("\r\n", pos);
      if (eol == std::string::npos) eol = head.size();
      const auto line = std::string_view(head).substr(pos, eol - pos);
      const auto colon = line.find(':');
      if (colon != std::string_view::npos && lower(line.substr(0, colon)) == "sec-websocket-key") {
        auto value = line.substr(colon + 1);
        while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
        key = std::string(value);
      }
      pos = eol + 2;
    }
    if (key.empty()) {
      send_all_nonblocking(client.fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
      return false;
    }
    const auto response = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
                          "Connection: Upgrade\r\nSec-WebSocket-Accept: " +
                          websocket_accept_key(key) + "\r\n\r\n";
    if (!send_all_nonblocking(client.fd, response)) return false;
    client.open = true;
  }

  // Client frames: honour close and ping, discard everything else.
  while (client.inbox.size() >= 2) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(client.inbox.data());
    const std::uint8_t opcode = p[0] & 0x0F;
    const bool masked = p[1] & 0x80;
    std::uint64_t len = p[1] & 0x7F;
    std::size_t header = 2;
    if (len == 126) {
      if (client.inbox.size() < 4) break;
      len = (std::uint64_t{p[2]} << 8) | p[3];
      header = 4;
    } else if (len == 127) {
      if (client.inbox.size() < 10) break;
      len = 0;
      for (int i = 0; i < 8; ++i) len = (len << 8) | p[2 + i];
      header = 10;
    }
    if (len > (1u << 20)) return false;
    const std::size_t total = header + (masked ? 4 : 0) + static_cast<std::size_t>(len);
    if (client.inbox.size() < total) break;
    std::string payload = client.inbox.substr(total - len, len);
    if (masked) {
      const auto* mask = p + header;
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ mask[i % 4]);
    }
    client.inbox.erase(0, total);
    if (opcode == 0x8) {
      send_all_nonblocking(client.fd, ws_frame(0x8, ""));
      return false;
    }
    if (opcode == 0x9) send_all_nonblocking(client.fd, ws_frame(0xA, payload));
  }
  return true;
}

void WebSocketServer::run() {
  while (!stop_) {
    std::vector<pollfd> fds{{listen_fd_, POLLIN, 0}, {wake_fd_[0], POLLIN, 0}};
    {
      std::lock_guard lock(mutex_);
      for (const auto& c : clients_) fds.push_back({c.fd, POLLIN, 0});
    }
    if (::poll(fds.data(), fds.size(), 250) <= 0) continue;
    if (fds[1].revents) {
      char drain[16];
      while (::read(wake_fd_[0], drain, sizeof drain) > 0) {
      }
    }
    if (fds[0].revents & POLLIN) accept_client();
    std::lock_guard lock(mutex_);
    for (std::size_t i = 2; i < fds.size(); ++i) {
      if (!fds[i].revents) continue;
      auto it = std::find_if(clients_.begin(), clients_.end(),
                             [fd = fds[i].fd](const Client& c) { return c.fd == fd; });
      if (it == clients_.end()) continue;
      if ((fds[i].revents & (POLLERR | POLLNVAL)) || !read_client(*it)) {
        ::close(it->fd);
        clients_.erase(it);
        ++disconnects_;
      }
    }
  }
}

// NetEmitter -----------------------------------------------------------------

NetEmitter::NetEmitter(const NetConfig& config, std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {
  if (config.osc.enabled) osc_ = std::make_unique<UdpSender>(config.osc.host, config.osc.port);
  if (config.websocket.enabled) {
    ws_ = std::make_unique<WebSocketServer>(config.websocket.host, config.websocket.port);
  }
  if (active()) worker_ = std::thread([this] { run(); });
}

NetEmitter::~NetEmitter() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void NetEmitter::post(Item item) {
  if (!active()) return;
  {
    std::lock_guard lock(mutex_);
    ++counters_.posted;
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      ++counters_.dropped;
    }
    queue_.push_back(std::move(item));
  }
  wake_.notify_one();
}

void NetEmitter::post_frame(const ContinuousFrame& frame, Source source, WallTime at) {
  post({false, frame, source, at});
}

void NetEmitter::post_lead(Source lead, WallTime at) { post({true, {}, lead, at}); }

void NetEmitter::flush() {
  if (!active()) return;
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

NetCounters NetEmitter::counters() const {
  std::lock_guard lock(mutex_);
  auto c = counters_;
  if (ws_) {
    c.ws_clients = ws_->clients();
    c.ws_disconnects = ws_->disconnects();
  }
  return c;
}

void NetEmitter::run() {
  std::unique_lock lock(mutex_);
  while (true) {
    wake_.wait(lock, [this] { return stop_ || !queue_.empty(); });
    if (queue_.empty() && stop_) return;
    auto batch = std::move(queue_);
    queue_.clear();
    busy_ = true;
    lock.unlock();
    std::uint64_t sent = 0, errors = 0, ws_messages = 0;
    for (const auto& item : batch) {
      if (osc_) {
        std::vector<float> args;
        const char* address = kOscFrameAddress;
        if (item.lead) {
          address = kOscLeadAddress;
          args.push_back(item.source == Source::ai ? 1.0f : 0.0f);
        } else {
          args.assign(item.frame.values.begin(), item.frame.values.end());
        }
        if (osc_->send(osc_encode(address, args))) {
          ++sent;
        } else {
          ++errors;
        }
      }
      if (ws_) {
        const auto text = item.lead ? feed_lead_json(item.source, item.at)
                                    : feed_frame_json(item.frame, item.source, item.at);
        ws_messages += ws_->broadcast(text);
      }
    }
    lock.lock();
    counters_.osc_sent += sent;
    counters_.osc_errors += errors;
    counters_.ws_messages += ws_messages;
    busy_ = false;
    if (queue_.empty()) idle_.notify_all();
  }
}

}  // namespace impsy
