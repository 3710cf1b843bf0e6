#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "swarmlearn/errors.hpp"

namespace swarmlearn {

/// Worker count from SWARMLEARN_THREADS; 1 when unset.
inline std::size_t thread_count_from_env() {
  const char* raw = std::getenv("SWARMLEARN_THREADS");
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) throw config_error("SWARMLEARN_THREADS must be a positive integer, got '" +
                                                std::string(raw) + "'");
  return static_cast<std::size_t>(v);
}

/// Calls fn(i) for i in [0, count). Results must be written to per-index
/// slots; the first exception (lowest index) is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t used = std::min(threads, count);
  for (std::size_t t = 0; t < used; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace swarmlearn
