#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace muscale {

/// Runs fn(0..n-1) on up to `workers` threads. Tasks must not share mutable
/// state; results are keyed by index so assembly is order-independent. The
/// first task exception is rethrown after all workers join.
inline void parallel_for_indexed(std::int64_t n, std::int64_t workers,
                                 const std::function<void(std::int64_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::int64_t count = std::min<std::int64_t>(workers, n);
  pool.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Default worker count: hardware concurrency, at least 1.
inline std::int64_t default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<std::int64_t>(n);
}

}  // namespace muscale
