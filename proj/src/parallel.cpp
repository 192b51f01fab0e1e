#include "byteprobe/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace byteprobe {

std::size_t worker_count() {
  static const std::size_t n = [] {
    if (const char* env = std::getenv("BYTEPROBE_THREADS")) {
      const long v = std::atol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<std::size_t>(hw == 0 ? 1 : hw);
  }();
  return n;
}

namespace {
thread_local bool inside_parallel_region = false;
}

void parallel_for(std::size_t n, std::size_t min_per_thread,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = worker_count();
  std::size_t chunks = std::min(workers, min_per_thread ? n / min_per_thread : n);
  // Nested regions run serially; the outer loop already owns the cores.
  if (chunks <= 1 || inside_parallel_region) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(chunks - 1);
  const std::size_t base = n / chunks;
  const std::size_t extra = n % chunks;
  auto run = [&fn](std::size_t b, std::size_t e) {
    inside_parallel_region = true;
    fn(b, e);
    inside_parallel_region = false;
  };
  std::size_t begin = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t end = begin + base + (c < extra ? 1 : 0);
    if (c + 1 == chunks) {
      run(begin, end);
    } else {
      threads.emplace_back(run, begin, end);
    }
    begin = end;
  }
  for (auto& t : threads) t.join();
}

}  // namespace byteprobe
