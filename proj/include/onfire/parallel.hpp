#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace onfire {

namespace detail {
inline thread_local bool in_parallel_region = false;
}

/// Upper bound on worker threads; 0 means "use hardware concurrency".
inline std::size_t& max_workers() {
  static std::size_t workers = 0;
  return workers;
}

inline std::size_t worker_count(std::size_t tasks) {
  std::size_t hw = max_workers() ? max_workers() : std::thread::hardware_concurrency();
  return std::max<std::size_t>(1, std::min(hw, tasks));
}

/// Runs fn(i) for i in [0, count). Each index is processed by exactly one worker, so
/// callers that write disjoint outputs per index get results independent of thread count.
/// Nested calls run serially on the calling worker.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = detail::in_parallel_region ? 1 : worker_count(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      detail::in_parallel_region = true;
      for (std::size_t i = t; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace onfire
