#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <thread>

#include <json.hpp>

#include "impsy/netio.hpp"
#include "net_client.hpp"
#include "oracles.hpp"

using namespace impsy;
using Bytes = std::vector<std::uint8_t>;

TEST_SUITE("netio") {

TEST_CASE("osc bytes for a one-float frame") {
  const float v[] = {0.5f};
  const Bytes expected{'/', 'i', 'm', 'p', 's', 'y', '/', 'f', 'r', 'a', 'm', 'e', 0, 0, 0, 0,
                       ',', 'f', 0, 0, 0x3F, 0x00, 0x00, 0x00};
  CHECK(osc_encode(kOscFrameAddress, v) == expected);
}

TEST_CASE("osc encoding decodes back for every length") {
  Rng rng(1);
  for (int n = 0; n <= 16; ++n) {
    for (const std::string addr : {"/a", "/abc", "/abcd", "/impsy/frame"}) {
      std::vector<float> args;
      for (int i = 0; i < n; ++i) args.push_back(static_cast<float>(rng.uniform(-10, 10)));
      const auto bytes = osc_encode(addr, args);
      CHECK(bytes.size() % 4 == 0);
      const auto msg = oracle::osc_decode(bytes);
      REQUIRE(msg);
      CHECK(msg->address == addr);
      CHECK(msg->tags == "," + std::string(static_cast<std::size_t>(n), 'f'));
      CHECK(msg->floats == args);
    }
  }
  const float one[] = {1.0f};
  CHECK_THROWS_AS(osc_encode("impsy", one), OscError);
  CHECK_THROWS_AS(osc_encode("", one), OscError);
}

TEST_CASE("feed json documents") {
  const WallTime at{std::chrono::milliseconds{1'700'000'000'250LL}};
  const auto f = nlohmann::json::parse(feed_frame_json({{0.25, 1.0}, 0.5}, Source::ai, at));
  CHECK(f["v"] == kFeedSchemaVersion);
  CHECK(f["type"] == "frame");
  CHECK(f["source"] == "ai");
  CHECK(f["values"] == nlohmann::json::array({0.25, 1.0}));
  CHECK(f["dt"] == 0.5);
  CHECK(f["t"].get<double>() == doctest::Approx(1'700'000'000.25));
  const auto l = nlohmann::json::parse(feed_lead_json(Source::human, at));
  CHECK(l["type"] == "lead");
  CHECK(l["lead"] == "human");
}

TEST_CASE("websocket accept key") {
  CHECK(websocket_accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("websocket clients receive broadcasts") {
  WebSocketServer server("127.0.0.1", 0);
  REQUIRE(server.port() > 0);
  test::WsClient client;
  std::string head;
  REQUIRE(client.connect(server.port(), &head));
  CHECK(head.find("s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);
  for (int i = 0; i < 100 && server.clients() == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(server.clients() == 1);
  const std::string big(70000, 'x');
  CHECK(server.broadcast("hello") == 1);
  CHECK(server.broadcast(big) == 1);
  CHECK(client.read_text() == std::optional<std::string>("hello"));
  CHECK(client.read_text() == std::optional<std::string>(big));
}

TEST_CASE("emitter sends osc and feed messages") {
  test::UdpReceiver rx;
  NetConfig cfg;
  cfg.osc = {true, "127.0.0.1", rx.port()};
  cfg.websocket = {true, "127.0.0.1", 0};
  NetEmitter net(cfg);
  REQUIRE(net.active());
  REQUIRE(net.websocket_port() > 0);
  test::WsClient ws;
  REQUIRE(ws.connect(net.websocket_port()));
  for (int i = 0; i < 100 && net.counters().ws_clients == 0; ++i) {
    net.post_lead(Source::human, WallTime{});
    net.flush();
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  // discard whatever lead messages arrived while connecting
  while (rx.receive(50)) {}
  while (auto m = ws.read_text(100)) {}

  net.post_frame({{0.5, 0.75}, 0.1}, Source::ai, WallTime{std::chrono::milliseconds{1000}});
  net.post_lead(Source::ai, WallTime{std::chrono::milliseconds{1000}});
  net.flush();
  const auto d1 = rx.receive();
  REQUIRE(d1);
  const auto m1 = oracle::osc_decode(*d1);
  REQUIRE(m1);
  CHECK(m1->address == kOscFrameAddress);
  CHECK(m1->floats == std::vector<float>{0.5f, 0.75f});
  const auto d2 = rx.receive();
  REQUIRE(d2);
  const auto m2 = oracle::osc_decode(*d2);
  REQUIRE(m2);
  CHECK(m2->address == kOscLeadAddress);
  CHECK(m2->floats == std::vector<float>{1.0f});

  const auto t1 = ws.read_text();
  REQUIRE(t1);
  CHECK(nlohmann::json::parse(*t1)["type"] == "frame");
  const auto t2 = ws.read_text();
  REQUIRE(t2);
  CHECK(nlohmann::json::parse(*t2)["lead"] == "ai");
}

TEST_CASE("an unreachable osc sink never stalls the caller") {
  int port;
  {
    test::UdpReceiver gone;
    port = gone.port();
  }
  NetConfig cfg;
  cfg.osc = {true, "127.0.0.1", port};
  NetEmitter net(cfg);
  std::vector<double> cost;
  for (int i = 0; i < 2000; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    net.post_frame({{0.5}, 0.01}, Source::ai, WallTime{});
    cost.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    if (i % 100 == 0) net.flush();
  }
  net.flush();
  std::sort(cost.begin(), cost.end());
  CHECK(cost[cost.size() * 99 / 100] < 1.0);
  const auto c = net.counters();
  CHECK(c.posted == 2000);
  CHECK(c.osc_errors > 0);
  CHECK(c.osc_sent + c.osc_errors + c.dropped == c.posted);
}

TEST_CASE("disabled sinks make posting a no-op") {
  NetEmitter net(NetConfig{});
  CHECK_FALSE(net.active());
  net.post_frame({{0.5}, 0.0}, Source::human, WallTime{});
  net.flush();
  CHECK(net.counters().osc_sent == 0);
}

}  // TEST_SUITE
