#pragma once

#include <cstddef>
#include <functional>

namespace nngls {

// Number of workers actually used: `requested` if positive, else the
// NNGLS_THREADS environment variable, else the hardware concurrency.
int resolve_threads(int requested);

// Splits [0, n) into one contiguous block per worker and runs
// fn(block_begin, block_end) on each. Writes to disjoint per-index slots are
// deterministic for any thread count; reductions must merge per-block
// partials in block order, which keeps results bit-stable for a fixed
// thread count. The first exception thrown by any block is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace nngls
