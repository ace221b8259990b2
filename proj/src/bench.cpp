#include "impsy/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace impsy {

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

BenchRow bench_predict(const MdrnnShape& shape, int iters, int warmup, std::uint64_t seed) {
  if (iters < kBenchMinIters) {
    throw std::invalid_argument("--iters must be at least " + std::to_string(kBenchMinIters));
  }
  Rng rng(seed);
  const auto params = MdrnnParams::initialize(shape, rng);
  const SamplingConfig temps;
  auto state = MdrnnState::initial(shape);
  ContinuousFrame prev = state.last_frame;

  auto one = [&] {
    auto [frame, next] = predict_next(params, state, prev, temps, kDefaultDtMax, rng);
    state = std::move(next);
    prev = std::move(frame);
  };
  for (int i = 0; i < warmup; ++i) one();

  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    one();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  BenchRow row;
  row.units = shape.units;
  row.layers = shape.layers;
  row.dim = shape.dim;
  row.mixtures = shape.mixtures;
  row.iters = iters;
  row.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  row.p50_ms = percentile(ms, 0.50);
  row.p99_ms = percentile(ms, 0.99);
  row.min_ms = *std::min_element(ms.begin(), ms.end());
  row.max_ms = *std::max_element(ms.begin(), ms.end());
  return row;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "units,layers,dim,mixtures,iters,mean_ms,p50_ms,p99_ms,min_ms,max_ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.units, r.layers,
                  r.dim, r.mixtures, r.iters, r.mean_ms, r.p50_ms, r.p99_ms, r.min_ms, r.max_ms);
    out += buf;
  }
  return out;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::string out = "  units  layers  dim     mean ms      p50 ms      p99 ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%7d %7d %4d %11.4f %11.4f %11.4f\n", r.units, r.layers, r.dim,
                  r.mean_ms, r.p50_ms, r.p99_ms);
    out += buf;
  }
  return out;
}

}  // namespace impsy
