#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace layerscope {

/// Worker cap used by every parallel loop in the library. Defaults to the
/// LAYERSCOPE_THREADS environment variable, else hardware concurrency.
std::size_t thread_limit();
void set_thread_limit(std::size_t threads);

/// Runs body(i) for i in [0, n) on up to thread_limit() workers. Each index
/// is visited exactly once; callers must write results to index-owned slots so
/// that the outcome does not depend on the worker count. The first exception
/// thrown by any worker is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min(thread_limit(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace layerscope
