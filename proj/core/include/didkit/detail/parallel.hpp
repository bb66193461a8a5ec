#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace didkit::detail {

// Runs body(i) for i in [0, n) on up to `threads` workers over static
// contiguous chunks. The body must only write to slots owned by its own
// index, which makes results independent of the schedule. The first chunk's
// exception (lowest index range) wins when several workers throw.
inline void parallel_for(long n, int threads, const std::function<void(long)>& body) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min<long>(threads, n) > 0
                                      ? static_cast<int>(std::min<long>(threads, n))
                                      : 1);
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const long chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const long begin = static_cast<long>(w) * chunk;
      const long end = std::min(n, begin + chunk);
      try {
        for (long i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace didkit::detail
