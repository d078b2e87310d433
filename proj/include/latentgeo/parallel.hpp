#pragma once

#include <cstddef>
#include <cstdlib>
#include <thread>
#include <vector>

namespace latentgeo {

// Worker threads used for independent sweeps (grid cells, edge weights).
// LG_THREADS caps the count; default is the hardware concurrency.
inline int thread_count() {
  static const int cached = [] {
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw == 0 ? 1 : static_cast<int>(hw);
    if (const char* env = std::getenv("LG_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && v > 0 && v < 4096) {
        n = static_cast<int>(v);
      }
    }
    return n;
  }();
  return cached;
}

// Runs fn(i) for every i in [0, n). Each index must write only to its own
// output slot so the result is independent of the thread schedule.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace latentgeo
