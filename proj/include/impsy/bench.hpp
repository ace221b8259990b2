#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "impsy/mdrnn.hpp"

namespace impsy {

/// Timing of predict_next on a random-weight network. Times in milliseconds.
struct BenchRow {
  int units = 0;
  int layers = 0;
  int dim = 0;
  int mixtures = 0;
  int iters = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

inline constexpr int kBenchMinIters = 100;
inline constexpr int kBenchWarmup = 50;

/// Throws std::invalid_argument when iters < kBenchMinIters.
BenchRow bench_predict(const MdrnnShape& shape, int iters, int warmup = kBenchWarmup,
                       std::uint64_t seed = 1);

std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_table(const std::vector<BenchRow>& rows);

/// p in [0, 1]; nearest-rank on a copy of samples.
double percentile(std::vector<double> samples, double p);

}  // namespace impsy
