#pragma once

#include <cstddef>
#include <functional>

namespace byteprobe {

// Number of worker threads (BYTEPROBE_THREADS overrides hardware count).
std::size_t worker_count();

// Runs fn(begin, end) over contiguous chunks of [0, n).  Each index is
// handled by exactly one thread and no cross-thread reductions happen, so
// results are bitwise independent of the thread count.  Callers are expected
// to gate small workloads themselves; `min_per_thread` keeps chunks coarse.
void parallel_for(std::size_t n, std::size_t min_per_thread,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace byteprobe
