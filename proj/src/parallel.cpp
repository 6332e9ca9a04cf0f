#include "parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace tsfm::detail {

std::size_t thread_count() {
  static const std::size_t count = [] {
    if (const char* env = std::getenv("TSFM_THREADS")) {
      try {
        auto v = std::stoul(env);
        if (v > 0) return static_cast<std::size_t>(v);
      } catch (...) {
      }
    }
    return static_cast<std::size_t>(std::max(1u, std::thread::hardware_concurrency()));
  }();
  return count;
}

void parallel_for(std::size_t n, std::size_t cost, const std::function<void(std::size_t, std::size_t)>& fn) {
  constexpr std::size_t kMinCost = 1u << 18;
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1 || cost < kMinCost) {
    if (n) fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(fn, b, e);
  }
  fn(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace tsfm::detail
