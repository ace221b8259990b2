// Minimal socket clients for exercising the network sinks.
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace test {

class UdpReceiver {
 public:
  UdpReceiver() {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a);
    socklen_t len = sizeof a;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
    port_ = ntohs(a.sin_port);
  }
  ~UdpReceiver() { close(); }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int port() const { return port_; }

  std::optional<std::vector<std::uint8_t>> receive(int timeout_ms = 1000) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) return std::nullopt;
    std::vector<std::uint8_t> buf(65536);
    const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

 private:
  int fd_ = -1;
  int port_ = 0;
};

class WsClient {
 public:
  bool connect(int port, std::string* response = nullptr) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(static_cast<std::uint16_t>(port));
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0) return false;
    const std::string req =
        "GET /feed HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
        "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n";
    ::send(fd_, req.data(), req.size(), 0);
    std::string head;
    while (head.find("\r\n\r\n") == std::string::npos) {
      char c;
      if (!wait(2000) || ::recv(fd_, &c, 1, 0) != 1) return false;
      head += c;
    }
    if (response) *response = head;
    return head.rfind("HTTP/1.1 101", 0) == 0;
  }

  // Next text frame payload (server frames are unmasked).
  std::optional<std::string> read_text(int timeout_ms = 2000) {
    std::uint8_t h[2];
    if (!read_exact(h, 2, timeout_ms)) return std::nullopt;
    std::uint64_t len = h[1] & 0x7F;
    if (len == 126) {
      std::uint8_t e[2];
      if (!read_exact(e, 2, timeout_ms)) return std::nullopt;
      len = (std::uint64_t(e[0]) << 8) | e[1];
    } else if (len == 127) {
      std::uint8_t e[8];
      if (!read_exact(e, 8, timeout_ms)) return std::nullopt;
      len = 0;
      for (auto b : e) len = (len << 8) | b;
    }
    std::string payload(len, '\0');
    if (len && !read_exact(reinterpret_cast<std::uint8_t*>(payload.data()), len, timeout_ms)) return std::nullopt;
    if ((h[0] & 0x0F) != 0x1) return read_text(timeout_ms);
    return payload;
  }

  ~WsClient() {
    if (fd_ >= 0) ::close(fd_);
  }

 private:
  bool wait(int timeout_ms) {
    pollfd p{fd_, POLLIN, 0};
    return ::poll(&p, 1, timeout_ms) > 0;
  }
  bool read_exact(std::uint8_t* out, std::size_t n, int timeout_ms) {
    std::size_t got = 0;
    while (got < n) {
      if (!wait(timeout_ms)) return false;
      const auto r = ::recv(fd_, out + got, n - got, 0);
      if (r <= 0) return false;
      got += static_cast<std::size_t>(r);
    }
    return true;
  }
  int fd_ = -1;
};

}  // namespace test
