#include <doctest.h>

#include <cmath>

#include "impsy/mapping.hpp"

using namespace impsy;

TEST_SUITE("mapping") {

TEST_CASE("inbound scaling is data / 127") {
  RouteIn cc{"", RouteKind::control_change, 3, 74, 2};
  RouteIn note{"", RouteKind::note_on, 1, 0, 0};
  for (int v = 0; v <= 127; ++v) {
    const auto a = scale_in(MidiMessage::control_change(3, 74, v), cc);
    CHECK(a.dim == 2);
    CHECK(a.value == static_cast<double>(v) / 127.0);
    CHECK(scale_in(MidiMessage::note_on(1, v, 90), note).value == static_cast<double>(v) / 127.0);
  }
  CHECK_THROWS_AS(scale_in(MidiMessage::control_change(3, 75, 1), cc), RouteMismatch);
  CHECK_THROWS_AS(scale_in(MidiMessage::control_change(2, 74, 1), cc), RouteMismatch);
  CHECK_THROWS_AS(scale_in(MidiMessage::note_off(1, 60), note), RouteMismatch);
}

TEST_CASE("full range scale in then out is the identity") {
  RouteIn in{"", RouteKind::control_change, 0, 1, 0};
  RouteOut out{"", RouteKind::control_change, 0, 1, 0, 0, 127, 100};
  RouteOut nout{"", RouteKind::note_on, 0, 0, 0, 0, 127, 100};
  for (int v = 0; v <= 127; ++v) {
    const double x = scale_in(MidiMessage::control_change(0, 1, v), in).value;
    CHECK(scale_out(x, out).data2 == v);
    CHECK(scale_out(x, nout).data1 == v);
  }
}

TEST_CASE("restricted output ranges") {
  RouteOut r{"", RouteKind::control_change, 0, 1, 0, 0, 12, 100};
  CHECK(scale_out_data(0.0, r) == 0);
  CHECK(scale_out_data(1.0, r) == 12);
  CHECK(scale_out_data(0.5, r) == 6);
  // half rounds up
  CHECK(scale_out_data(0.5 / 12.0, r) == 1);
  CHECK(scale_out_data(-3.0, r) == 0);
  CHECK(scale_out_data(7.0, r) == 12);
  CHECK(scale_out_data(std::nan(""), r) == 0);
  for (int lo = 0; lo <= 127; lo += 9) {
    for (int hi = lo; hi <= 127; hi += 13) {
      RouteOut q{"", RouteKind::note_on, 0, 0, 0, lo, hi, 100};
      for (int i = 0; i <= 100; ++i) {
        const int d = scale_out_data(i / 100.0, q);
        CHECK(d >= lo);
        CHECK(d <= hi);
      }
      CHECK(scale_out_data(0.0, q) == lo);
      CHECK(scale_out_data(1.0, q) == hi);
    }
  }
}

TEST_CASE("note output carries the route velocity") {
  RouteOut r{"", RouteKind::note_on, 5, 0, 0, 36, 84, 77};
  const auto m = scale_out(0.5, r);
  CHECK(m.kind == MidiKind::note_on);
  CHECK(m.channel == 5);
  CHECK(m.data1 == 60);
  CHECK(m.data2 == 77);
}

TEST_CASE("inbound router counters and precedence") {
  EngineConfig c;
  c.dimension = 2;
  c.inputs = {{"keys", RouteKind::note_on, 0, 0, 0}, {"", RouteKind::control_change, 0, 1, 1}};
  InboundRouter router(c);
  auto r1 = router.route({MidiMessage::note_on(0, 64, 100), 1.0, "keys"});
  REQUIRE(r1.event);
  CHECK(r1.event->dim == 0);
  CHECK(r1.event->at == 1.0);
  CHECK_FALSE(router.route({MidiMessage::note_on(0, 64, 100), 1.0, "pads"}).event);
  CHECK(router.route({MidiMessage::control_change(0, 1, 5), 2.0, "pads"}).event);
  CHECK_FALSE(router.route({MidiMessage::note_off(0, 64), 3.0, "keys"}).event);
  CHECK(router.counters().received == 4);
  CHECK(router.counters().matched == 2);
  CHECK(router.counters().dropped == 2);
  CHECK(router.counters().passed_through == 0);

  c.passthrough = "synth";
  InboundRouter pass(c);
  const auto r = pass.route({MidiMessage::passthrough({0xF8}), 4.0, "keys"});
  CHECK_FALSE(r.event);
  REQUIRE(r.passthrough);
  CHECK(r.passthrough->device == "synth");
  CHECK(r.passthrough->message.raw == std::vector<std::uint8_t>{0xF8});
  const auto& k = pass.counters();
  CHECK(k.matched + k.passed_through + k.dropped == k.received);
}

TEST_CASE("outbound control changes are de-duplicated per route") {
  EngineConfig c;
  c.dimension = 2;
  c.outputs = {{"a", RouteKind::control_change, 0, 1, 0, 0, 127, 100},
               {"b", RouteKind::note_on, 1, 0, 1, 0, 127, 100},
               {"c", RouteKind::control_change, 2, 7, 0, 0, 127, 100}};
  OutboundRouter router(c);
  std::vector<std::size_t> idx;
  auto first = router.route({{0.5, 0.5}, 0.1}, 1.0, &idx);
  CHECK(first.size() == 3);
  CHECK(idx == std::vector<std::size_t>{0, 1, 2});
  CHECK(first[0].device == "a");
  CHECK(first[0].at == 1.0);
  idx.clear();
  // same CC byte: only the note is re-sent
  auto second = router.route({{0.501, 0.5}, 0.1}, 2.0, &idx);
  REQUIRE(second.size() == 1);
  CHECK(idx == std::vector<std::size_t>{1});
  auto third = router.route({{0.9, 0.5}, 0.1}, 3.0);
  CHECK(third.size() == 3);
  router.reset();
  CHECK(router.route({{0.9, 0.5}, 0.1}, 4.0).size() == 3);
}

}  // TEST_SUITE
