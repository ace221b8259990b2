#include "impsy/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "impsy/rng.hpp"

namespace impsy {

std::vector<LogRecord> synth_gestures(const CorpusOptions& options, WallTime start) {
  if (options.dim < 1) throw std::invalid_argument("corpus dimension must be >= 1");
  Rng rng(options.seed);
  std::vector<LogRecord> records;
  double t = 0.0;
  std::int64_t last_ms = -1;
  while (t < options.seconds) {
    const double length = rng.uniform(2.0, 6.0);
    const double freq = rng.uniform(0.3, 1.2);
    const double amp = rng.uniform(0.2, 0.45);
    const double centre = rng.uniform(0.5 - (0.5 - amp), 0.5 + (0.5 - amp));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double end = std::min(t + length, options.seconds);
    const double gesture_start = t;
    while (t < end) {
      const double local = t - gesture_start;
      LogRecord r;
      r.source = Source::human;
      for (int d = 0; d < options.dim; ++d) {
        const double v = centre + amp * std::sin(2.0 * std::numbers::pi * freq * local + phase + 0.7 * d) +
                         0.01 * rng.normal();
        r.dims.push_back(std::clamp(v, 0.0, 1.0));
      }
      auto ms = static_cast<std::int64_t>(std::llround(t * 1000.0));
      if (ms <= last_ms) ms = last_ms + 1;
      last_ms = ms;
      r.at = start + std::chrono::milliseconds(ms);
      records.push_back(std::move(r));
      t += options.event_interval_s * rng.uniform(0.5, 1.5);
    }
    t += rng.uniform(0.5, 3.0);
  }
  return records;
}

std::filesystem::path write_session(const std::vector<LogRecord>& records, int dim,
                                    const std::filesystem::path& dir) {
  SessionLog log;
  const WallTime start = records.empty() ? WallTime{} : records.front().at;
  const auto path = log.rotate(dir, dim, start);
  if (!log.enabled()) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) {
    if (!log.write(r)) throw std::runtime_error("write failed: " + path.string());
  }
  log.close();
  return path;
}

}  // namespace impsy
