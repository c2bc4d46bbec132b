#pragma once

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "meflut/error.hpp"

namespace meflut {

inline constexpr int kMinBenchRepeats = 5;

struct BenchResult {
  std::string method;
  int resolution = 0;  // square side in pixels
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  int repeats = 0;
  int threads = 1;
};

/// Runs fn once untimed, then `repeats` timed runs.
template <typename Fn>
BenchResult time_runs(const std::string& method, int resolution, int repeats, int threads, Fn&& fn) {
  if (repeats < kMinBenchRepeats) {
    throw ConfigError("benchmarks need at least " + std::to_string(kMinBenchRepeats) + " repetitions");
  }
  fn();
  std::vector<double> ms;
  ms.reserve(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  BenchResult r;
  r.method = method;
  r.resolution = resolution;
  r.repeats = repeats;
  r.threads = threads;
  r.min_ms = ms.front();
  r.median_ms = repeats % 2 == 1 ? ms[repeats / 2] : 0.5 * (ms[repeats / 2 - 1] + ms[repeats / 2]);
  r.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / repeats;
  return r;
}

inline void write_bench_tsv(std::ostream& os, const std::vector<BenchResult>& results) {
  os << "method\tresolution\tmedian_ms\tmean_ms\tmin_ms\trepeats\tthreads\n";
  for (const auto& r : results) {
    os << r.method << '\t' << r.resolution << '\t' << std::fixed << std::setprecision(3) << r.median_ms << '\t'
       << r.mean_ms << '\t' << r.min_ms << '\t' << r.repeats << '\t' << r.threads << '\n';
  }
}

}  // namespace meflut
