#include "layerscope/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace layerscope {

namespace {

std::size_t initial_limit() {
  if (const char* env = std::getenv("LAYERSCOPE_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<std::size_t>(value);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::atomic<std::size_t>& limit_slot() {
  static std::atomic<std::size_t> slot{initial_limit()};
  return slot;
}

}  // namespace

std::size_t thread_limit() { return limit_slot().load(std::memory_order_relaxed); }

void set_thread_limit(std::size_t threads) {
  limit_slot().store(std::max<std::size_t>(1, threads), std::memory_order_relaxed);
}

}  // namespace layerscope
