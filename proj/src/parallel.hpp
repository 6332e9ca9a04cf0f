#pragma once

#include <cstddef>
#include <functional>

namespace tsfm::detail {

// Worker count: TSFM_THREADS when set, else hardware concurrency.
std::size_t thread_count();

// Runs fn(begin, end) over [0, n) in contiguous chunks. Each index is handled
// by exactly one chunk, so kernels that write disjoint outputs stay
// deterministic. Runs inline when `cost` (rough flop count) is small.
void parallel_for(std::size_t n, std::size_t cost, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace tsfm::detail
