#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "impsy/session_log.hpp"

namespace impsy {

struct CorpusOptions {
  double seconds = 300.0;
  int dim = 1;
  std::uint64_t seed = 7;
  // Mean spacing of events inside a gesture.
  double event_interval_s = 0.1;
};

/// Synthetic performance: sinusoidal gestures of 2-6 s with jittered event
/// times and small value noise, separated by rests of 0.5-3 s. All records
/// are human, values in [0, 1], timestamps strictly increasing.
std::vector<LogRecord> synth_gestures(const CorpusOptions& options, WallTime start);

/// Writes the records as one session log in dir and returns its path.
std::filesystem::path write_session(const std::vector<LogRecord>& records, int dim,
                                    const std::filesystem::path& dir);

}  // namespace impsy
