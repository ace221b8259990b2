// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: impsy_acceptance [name...]   (no names runs everything)

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <zlib.h>

#include "gradcheck.hpp"
#include "impsy/bench.hpp"
#include "impsy/corpus.hpp"
#include "impsy/train.hpp"
#include "interaction_checks.hpp"
#include "midi_checks.hpp"
#include "oracles.hpp"
#include "rig.hpp"

using namespace impsy;

namespace {

// Tolerances ------------------------------------------------------------------
constexpr double kLatencyBudgetMs = 5.0;           // mean predict_next, 2x64, D=8
constexpr double kGradRelTol = 1e-4;               // central differences, eps below
constexpr double kGradEps = 1e-5;
constexpr double kOracleTol = 1e-12;
constexpr int kOracleSeeds = 100;
constexpr int kSampleCount = 10000;
constexpr double kSampleMeanTol = 4.0;             // multiples of 1/sqrt(N)
constexpr double kSampleVarTol = 0.10;             // relative
constexpr double kTrainBudgetS = 300.0;
constexpr int kChunkStreams = 1000;
constexpr double kSwitchover = 0.1;
constexpr double kE2eSeconds = 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// 1 -----------------------------------------------------------------------------
Outcome latency() {
  const std::vector<std::pair<int, int>> sizes{{64, 2000}, {128, 1000}, {256, 400}, {512, 150}};
  std::vector<double> means;
  std::string detail;
  for (auto [units, iters] : sizes) {
    const auto row = bench_predict({8, 2, units, 5}, iters, kBenchWarmup, 1);
    means.push_back(row.mean_ms);
    detail += fmt("%s%d:%.3fms", detail.empty() ? "" : " ", units, row.mean_ms);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < means.size(); ++i) monotone = monotone && means[i] > means[i - 1];
  return {means[0] < kLatencyBudgetMs && monotone,
          fmt("mean 2x64 D=8 %.3f ms (< %.1f), growth ", means[0], kLatencyBudgetMs) + detail +
              (monotone ? " monotone" : " NOT monotone")};
}

// 2 -----------------------------------------------------------------------------
Outcome gradient() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t tensors = 0, elements = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& e : test::gradient_check(seed, kGradEps)) {
      ++tensors;
      elements += e.size;
      if (e.max_rel > worst) {
        worst = e.max_rel;
        worst_name = e.name;
      }
    }
  }
  return {worst < kGradRelTol, fmt("H=3 K=2 M=2, %zu tensors / %zu elements, max rel err %.2e (%s) < %.0e",
                                   tensors, elements, worst, worst_name.c_str(), kGradRelTol)};
}

// 3 -----------------------------------------------------------------------------
Outcome oracle_equivalence() {
  double worst = 0.0;
  for (int seed = 0; seed < kOracleSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 1000);
    const MdrnnShape shape{1 + seed % 4, 1 + seed % 3, 1, 1 + seed % 5};
    const auto p = test::random_params(shape, rng, 2.0);
    auto state = MdrnnState::initial(shape);
    auto ref = oracle::scalar_zero_state(shape);
    for (int t = 0; t < 10; ++t) {
      std::vector<double> x(static_cast<std::size_t>(shape.width()));
      for (auto& v : x) v = rng.uniform(-1.0, 2.0);
      auto [mix, next] = forward_step(p, state, x);
      const auto e = oracle::scalar_step(p, ref, x);
      for (std::size_t i = 0; i < e.pi.size(); ++i) worst = std::max(worst, std::abs(mix.pi[i] - e.pi[i]));
      for (std::size_t i = 0; i < e.mu.size(); ++i) {
        worst = std::max(worst, std::abs(mix.mu[i] - e.mu[i]));
        worst = std::max(worst, std::abs(mix.sigma[i] - e.sigma[i]));
      }
      for (std::size_t l = 0; l < ref.h.size(); ++l) {
        worst = std::max(worst, std::abs(next.h[l][0] - ref.h[l][0]));
        worst = std::max(worst, std::abs(next.c[l][0] - ref.c[l][0]));
      }
      state = next;
    }
  }
  return {worst <= kOracleTol, fmt("%d single-unit seeds x 10 steps, max abs diff %.2e <= %.0e", kOracleSeeds,
                                   worst, kOracleTol)};
}

// 4 -----------------------------------------------------------------------------
Outcome sampling() {
  MixtureParams mix{1, 1, {1.0}, {0.0}, {1.0}};
  Rng rng(2024);
  double sum = 0, sq = 0;
  for (int i = 0; i < kSampleCount; ++i) {
    const double v = sample(mix, 1.0, 1.0, rng)[0];
    sum += v;
    sq += v * v;
  }
  const double n = kSampleCount;
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  const double mean_tol = kSampleMeanTol / std::sqrt(n);
  return {std::abs(mean) < mean_tol && std::abs(var - 1.0) < kSampleVarTol,
          fmt("N=%d mean %.4f (|.| < %.3f), variance %.4f (within %.0f%% of 1)", kSampleCount, mean, mean_tol, var,
              kSampleVarTol * 100)};
}

// 5 -----------------------------------------------------------------------------
Outcome training() {
  const auto t0 = std::chrono::steady_clock::now();
  CorpusOptions opts;
  opts.seconds = 300;
  opts.dim = 1;
  opts.seed = 7;
  const auto records = synth_gestures(opts, WallTime{std::chrono::milliseconds{1'700'000'000'000LL}});
  test::TempDir dir;
  const auto data = build_dataset({write_session(records, 1, dir.path)}, 1);

  const MdrnnShape shape{1, 2, 32, 5};
  TrainHyper h;
  h.epochs = 12;
  h.batch_size = 8;
  auto run = [&] {
    Rng rng(42);
    return train(data, shape, h, std::nullopt, rng);
  };
  const auto a = run();
  const auto b = run();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Rng init_rng(42);
  const auto init = MdrnnParams::initialize(shape, init_rng);
  const double before = dataset_loss(init, data, h.seq_len);
  const double after = dataset_loss(a.params, data, h.seq_len);
  const bool deterministic = a.params == b.params && a.best_epoch == b.best_epoch;
  return {after < before && deterministic && wall < kTrainBudgetS,
          fmt("H=32 on %zu frames: NLL %.4f -> %.4f (best epoch %d), %s, %.1f s (< %.0f s) for two runs",
              data.frame_count(), before, after, a.best_epoch, deterministic ? "deterministic" : "NOT deterministic",
              wall, kTrainBudgetS)};
}

// 6 -----------------------------------------------------------------------------
Outcome midi_codec() {
  const auto rt = test::voice_round_trip();
  const auto ci = test::chunk_invariance(kChunkStreams, 31337);
  return {rt.failures == 0 && ci.failures == 0 && ci.checked == kChunkStreams,
          fmt("round trip %llu/%llu voice messages, chunk invariance %llu/%llu streams",
              static_cast<unsigned long long>(rt.checked - rt.failures), static_cast<unsigned long long>(rt.checked),
              static_cast<unsigned long long>(ci.checked - ci.failures),
              static_cast<unsigned long long>(ci.checked))};
}

// 7 -----------------------------------------------------------------------------
Outcome interaction() {
  int phrases = 0, takeovers = 0, steals = 0, leaked = 0;
  std::size_t pending = 0;
  double worst = 0.0, tick = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = test::run_interaction_trace(seed, kSwitchover, 100.0, 40);
    phrases += r.phrases;
    takeovers += r.takeovers;
    steals += r.steal_backs;
    pending += r.pending_after_human;
    leaked += r.ai_messages_while_human;
    worst = std::max(worst, r.max_takeover_error);
    tick = r.tick_period;
  }
  const bool ok = takeovers == phrases && worst <= tick + 1e-9 && steals > 0 && pending == 0 && leaked == 0;
  return {ok, fmt("switchover %.1f s: %d/%d takeovers, max error %.4f s (<= tick %.3f s); %d steal-backs, "
                  "%zu pending left, %d AI messages after steal-back",
                  kSwitchover, takeovers, phrases, worst, tick, steals, pending, leaked)};
}

// 8 -----------------------------------------------------------------------------

// Human phrases on random channels separated by silences long enough for the AI.
void play_script(test::Rig& rig, double seconds, std::uint64_t seed,
                 const std::function<void(double)>& at_midpoint = {}) {
  Rng script(seed);
  const double end = rig.clock.now() + seconds;
  const double mid = rig.clock.now() + seconds / 2;
  bool mid_done = false;
  while (rig.clock.now() < end) {
    const int events = 3 + static_cast<int>(script.below(15));
    for (int e = 0; e < events && rig.clock.now() < end; ++e) {
      rig.device->inject(MidiMessage::control_change(static_cast<int>(script.below(8)), 1,
                                                     static_cast<int>(script.below(128))));
      rig.run_for(0.01 * static_cast<double>(2 + script.below(5)));
    }
    const double silence = script.uniform(2.2, 5.0);
    const double stop = std::min(end, rig.clock.now() + silence);
    while (rig.clock.now() < stop - 1e-9) {
      if (!mid_done && rig.clock.now() >= mid) {
        if (at_midpoint) at_midpoint(rig.clock.now());
        mid_done = true;
      }
      rig.run_for(0.01);
    }
  }
}

// Re-serializing the parsed messages must give back exactly the bytes that were sent.
bool serialize_all_equal(const std::vector<MidiMessage>& msgs, const std::vector<std::uint8_t>& bytes) {
  std::vector<std::uint8_t> out;
  for (const auto& m : msgs) {
    const auto b = serialize(m);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out == bytes;
}

Outcome daw_end_to_end() {
  test::Rig rig(5, 32);
  play_script(rig, kE2eSeconds, 77);
  rig.runtime->flush_outputs();
  const auto status = rig.runtime->status();
  const auto& cfg = rig.config;

  // Every byte the host wrote must decode to a configured output (or its note-off).
  const auto bytes = rig.device->received();
  MidiParser parser;
  const auto msgs = parser.feed(bytes);
  std::size_t bad = 0, notes = 0, ccs = 0, offs = 0;
  for (const auto& m : msgs) {
    bool ok = false;
    for (const auto& r : cfg.outputs) {
      if (m.channel != r.channel) continue;
      if (r.kind == RouteKind::note_on && m.kind == MidiKind::note_on) {
        ok = m.data1 >= r.out_lo && m.data1 <= r.out_hi && m.data2 == r.velocity;
      } else if (r.kind == RouteKind::note_on && m.kind == MidiKind::note_off) {
        ok = m.data1 >= r.out_lo && m.data1 <= r.out_hi;
      } else if (r.kind == RouteKind::control_change && m.kind == MidiKind::control_change) {
        ok = m.data1 == r.number && m.data2 >= r.out_lo && m.data2 <= r.out_hi;
      }
      if (ok) break;
    }
    if (!ok) ++bad;
    notes += m.kind == MidiKind::note_on;
    offs += m.kind == MidiKind::note_off;
    ccs += m.kind == MidiKind::control_change;
  }
  const bool stream_clean = parser.dropped_bytes() == 0 && serialize_all_equal(msgs, bytes);

  // Rebuild the session log and reconcile counts with the engine.
  const auto sessions = list_sessions(rig.dir.path / "logs");
  const auto data = build_dataset(sessions, 8);
  const auto human = data.filtered(Source::human).frame_count();
  const auto ai = data.filtered(Source::ai).frame_count();
  const bool counts = human == status.engine.human_events && ai == status.engine.ai_frames_emitted &&
                      status.log_dropped == 0 && status.output_failures == 0 && human > 0 && ai > 0;

  return {bad == 0 && stream_clean && counts && !msgs.empty(),
          fmt("%.0f s: %zu bytes, %zu note-on / %zu note-off / %zu CC, %zu out of range; log %zu human + %zu ai "
              "frames vs engine %llu + %llu",
              kE2eSeconds, bytes.size(), notes, offs, ccs, bad, human, ai,
              static_cast<unsigned long long>(status.engine.human_events),
              static_cast<unsigned long long>(status.engine.ai_frames_emitted))};
}

// 9 -----------------------------------------------------------------------------

std::map<std::string, std::uint32_t> tree_checksums(const std::filesystem::path& root, bool include_logs) {
  std::map<std::string, std::uint32_t> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).string();
    if (!include_logs && rel.rfind("logs", 0) == 0) continue;
    const auto text = test::read_file(e.path());
    out[rel] = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
  }
  return out;
}

Outcome service_safety() {
  // Twin runtimes on the same seed and script; only the first one is attacked.
  test::Rig attacked(9, 16);
  test::Rig control(9, 16);
  attacked.serve();

  int rejected = 0, attempts = 0;
  bool disk_same = true;
  auto attack = [&](double) {
    const auto before = tree_checksums(attacked.dir.path, false);
    const auto status_before = to_json(attacked.runtime->status());
    httplib::Client cli("127.0.0.1", attacked.service->port());
    auto check = [&](const httplib::Result& r, int expected) {
      ++attempts;
      if (r && r->status == expected) ++rejected;
    };
    auto doc = to_json(attacked.config);
    auto bad = doc;
    bad["interaction"]["switchover_s"] = 0;
    check(cli.Put("/api/config", bad.dump(), "application/json"), 422);
    bad = doc;
    bad["outputs"][0]["out_lo"] = 200;
    bad["inputs"].push_back(doc["inputs"][0]);
    check(cli.Put("/api/config", bad.dump(), "application/json"), 422);
    bad = doc;
    bad["dimension"] = 3;
    check(cli.Put("/api/config", bad.dump(), "application/json"), 422);
    bad = doc;
    bad["surprise"] = true;
    check(cli.Put("/api/config", bad.dump(), "application/json"), 422);
    check(cli.Put("/api/config", "{\"dimension\": ", "application/json"), 422);

    Rng rng(3);
    auto good = serialize_weights(MdrnnParams::initialize({8, 1, 4, 2}, rng));
    auto flipped = good;
    flipped[flipped.size() / 2] ^= 0x40;
    auto truncated = good;
    truncated.resize(good.size() / 3);
    auto narrow = serialize_weights(MdrnnParams::initialize({2, 1, 4, 2}, rng));
    for (const std::vector<std::uint8_t>* payload : {&flipped, &truncated, &narrow}) {
      httplib::MultipartFormDataItems items;
      items.push_back({"model", std::string(payload->begin(), payload->end()), "evil.mdrnn",
                       "application/octet-stream"});
      check(cli.Post("/api/model", items), 422);
    }
    check(cli.Post("/api/model", std::string("not a model"), "application/octet-stream"), 422);

    const auto after = tree_checksums(attacked.dir.path, false);
    auto status_after = to_json(attacked.runtime->status());
    disk_same = before == after && status_before == status_after;
  };

  play_script(attacked, 20.0, 123, attack);
  play_script(control, 20.0, 123);
  attacked.runtime->flush_outputs();
  control.runtime->flush_outputs();

  const bool midi_same = attacked.device->received() == control.device->received();
  const auto a_tree = tree_checksums(attacked.dir.path, true);
  const auto c_tree = tree_checksums(control.dir.path, true);
  const bool trees_same = a_tree == c_tree;
  const bool config_same = attacked.runtime->config() == control.runtime->config();
  return {rejected == attempts && attempts == 9 && disk_same && midi_same && trees_same && config_same,
          fmt("%d/%d bad requests rejected; disk and status unchanged across requests: %s; twin MIDI output "
              "(%zu bytes) %s; twin on-disk trees (%zu files) %s",
              rejected, attempts, disk_same ? "yes" : "NO", attacked.device->received().size(),
              midi_same ? "identical" : "DIFFER", a_tree.size(), trees_same ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"latency", latency},
      {"gradient", gradient},
      {"oracle", oracle_equivalence},
      {"sampling", sampling},
      {"training", training},
      {"midi_codec", midi_codec},
      {"interaction", interaction},
      {"daw_end_to_end", daw_end_to_end},
      {"service_safety", service_safety},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-15s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
