#include <doctest.h>

#include <algorithm>

#include "impsy/corpus.hpp"
#include "impsy/dataset.hpp"
#include "impsy/session_log.hpp"
#include "support.hpp"

using namespace impsy;
using std::chrono::milliseconds;

namespace {

WallTime ms(long long v) { return WallTime{milliseconds{v}}; }

}  // namespace

TEST_SUITE("log") {

TEST_CASE("timestamps round trip at millisecond resolution") {
  Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    const auto t = ms(static_cast<long long>(rng.below(4'000'000'000'000ULL)));
    const auto text = format_timestamp(t);
    CHECK(text.size() == 24);
    const auto back = parse_timestamp(text);
    REQUIRE(back);
    CHECK(*back == t);
  }
  CHECK(format_timestamp(ms(0)) == "1970-01-01T00:00:00.000Z");
  CHECK_FALSE(parse_timestamp("2026-13-01T00:00:00.000Z"));
  CHECK_FALSE(parse_timestamp("2026-01-01 00:00:00.000Z"));
  CHECK_FALSE(parse_timestamp("2026-01-01T00:00:00Z"));
}

TEST_CASE("log lines round trip exactly") {
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    LogRecord r{ms(1'700'000'000'000LL + i * 37), i % 3 ? Source::human : Source::ai, {}};
    for (int d = 0; d < 4; ++d) r.dims.push_back(rng.uniform());
    r.dims.push_back(i % 2 ? 0.0 : 1.0);
    const auto back = parse_log_line(format_log_line(r), 5);
    REQUIRE(back);
    CHECK(*back == r);
  }
}

TEST_CASE("malformed lines are rejected") {
  const std::string good = "2026-01-01T00:00:00.000Z,human,0.5,0.25";
  CHECK(parse_log_line(good, 2));
  CHECK(parse_log_line(good + "\r", 2));
  CHECK_FALSE(parse_log_line(good, 3));
  CHECK_FALSE(parse_log_line("2026-01-01T00:00:00.000Z,robot,0.5,0.25", 2));
  CHECK_FALSE(parse_log_line("2026-01-01T00:00:00.000Z,ai,0.5,1.25", 2));
  CHECK_FALSE(parse_log_line("2026-01-01T00:00:00.000Z,ai,0.5,", 2));
  CHECK_FALSE(parse_log_line("2026-01-01T00:00:00.000Z,ai,0.5,x", 2));
}

TEST_CASE("session files") {
  CHECK(session_file_name(ms(1'700'000'000'123LL)) == "20231114T221320.csv");
  test::TempDir dir;
  SessionLog a, b;
  const auto pa = a.rotate(dir.path, 2, ms(1'700'000'000'000LL));
  const auto pb = b.rotate(dir.path, 2, ms(1'700'000'000'000LL));
  CHECK(pa != pb);
  CHECK(a.write({ms(1'700'000'000'000LL), Source::human, {0.5, 0.5}}));
  a.close();
  b.close();
  const auto sessions = list_sessions(dir.path);
  CHECK(sessions.size() == 2);
  const auto text = test::read_file(pa);
  CHECK(text.rfind(log_header(2) + "\n", 0) == 0);
  CHECK(text.find("2023-11-14T22:13:20.000Z,human,0.5,0.5\n") != std::string::npos);
}

TEST_CASE("async writer drains everything it accepted") {
  test::TempDir dir;
  AsyncLogWriter w(100000);
  const auto path = w.rotate(dir.path, 1, ms(0));
  for (int i = 0; i < 5000; ++i) w.post({ms(i), Source::ai, {i / 5000.0}});
  w.drain();
  CHECK(w.written() == 5000);
  CHECK(w.dropped() == 0);
  const auto d = build_dataset({path}, 1);
  REQUIRE(d.sequences.size() == 1);
  CHECK(d.sequences[0].frames.size() == 5000);
}

TEST_CASE("async writer drops instead of blocking when full") {
  test::TempDir dir;
  AsyncLogWriter w(4);
  w.rotate(dir.path, 1, ms(0));
  for (int i = 0; i < 20000; ++i) w.post({ms(i), Source::ai, {0.5}});
  w.drain();
  CHECK(w.written() + w.dropped() == 20000);
}

}  // TEST_SUITE

TEST_SUITE("dataset") {

TEST_CASE("dt is the timestamp gap, capped, and restarts per file") {
  test::TempDir dir;
  test::write_file(dir.path / "a.csv",
                   log_header(1) + "\n"
                   "2026-01-01T00:00:00.000Z,human,0.1\n"
                   "2026-01-01T00:00:01.500Z,ai,0.2\n"
                   "2026-01-01T00:00:11.500Z,human,0.3\n");
  test::write_file(dir.path / "b.csv",
                   "2026-01-01T00:01:00.000Z,human,0.4\n"
                   "2026-01-01T00:01:00.250Z,human,0.5\n");
  BuildReport rep;
  const auto d = build_dataset({dir.path / "a.csv", dir.path / "b.csv"}, 1, 5.0, &rep);
  REQUIRE(d.sequences.size() == 2);
  const auto& a = d.sequences[0].frames;
  REQUIRE(a.size() == 3);
  CHECK(a[0].dt == 0.0);
  CHECK(a[1].dt == doctest::Approx(1.5));
  CHECK(a[2].dt == 5.0);
  CHECK(d.sequences[0].sources == std::vector<Source>{Source::human, Source::ai, Source::human});
  CHECK(d.sequences[1].frames[0].dt == 0.0);
  CHECK(d.sequences[1].frames[1].dt == doctest::Approx(0.25));
  CHECK(rep.lines_parsed == 5);
  CHECK(rep.warnings.empty());
  CHECK(d.frame_count() == 5);
  CHECK(d.filtered(Source::ai).frame_count() == 1);
}

TEST_CASE("a partial final line is skipped with a warning") {
  test::TempDir dir;
  test::write_file(dir.path / "a.csv",
                   "2026-01-01T00:00:00.000Z,human,0.1,0.2\n"
                   "2026-01-01T00:00:00.100Z,human,0.1\n"
                   "2026-01-01T00:00:00.200Z,ai,0.3,0.4\n"
                   "2026-01-01T00:00:00.300Z,ai,0.");
  BuildReport rep;
  const auto d = build_dataset({dir.path / "a.csv"}, 2, 5.0, &rep);
  REQUIRE(d.sequences.size() == 1);
  CHECK(d.sequences[0].frames.size() == 2);
  CHECK(d.sequences[0].frames[1].dt == doctest::Approx(0.2));
  CHECK(rep.lines_skipped == 2);
  REQUIRE(rep.warnings.size() == 2);
  CHECK(rep.warnings[1].find("partial") != std::string::npos);
}

TEST_CASE("a header with another dimension is an error") {
  test::TempDir dir;
  test::write_file(dir.path / "a.csv", log_header(3) + "\n");
  CHECK_THROWS_AS(build_dataset({dir.path / "a.csv"}, 2), DatasetError);
}

TEST_CASE("pack round trip and corruption") {
  CorpusOptions o;
  o.seconds = 30;
  o.dim = 3;
  const auto records = synth_gestures(o, ms(1'700'000'000'000LL));
  test::TempDir dir;
  const auto d = build_dataset({write_session(records, 3, dir.path)}, 3);
  CHECK(d.frame_count() == records.size());
  const auto bytes = pack_dataset(d);
  CHECK(unpack_dataset(bytes) == d);
  auto bad = bytes;
  bad[bad.size() / 2] ^= 1;
  CHECK_THROWS_AS(unpack_dataset(bad), DatasetError);
  save_dataset(d, dir.path / "d.impd");
  CHECK(load_dataset(dir.path / "d.impd") == d);
}

TEST_CASE("synthetic corpus properties") {
  CorpusOptions o;
  o.seconds = 120;
  o.dim = 2;
  const auto a = synth_gestures(o, ms(0));
  CHECK(a == synth_gestures(o, ms(0)));
  REQUIRE(a.size() > 100);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) CHECK(a[i].at > a[i - 1].at);
    CHECK(a[i].source == Source::human);
    for (double v : a[i].dims) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK(a.back().at - a.front().at <= milliseconds{120'000});
}

}  // TEST_SUITE
