#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace matsteer {

/// Worker count from MATSTEER_THREADS (0 or unset means hardware concurrency).
inline std::size_t thread_budget() {
  std::size_t n = 0;
  if (const char* env = std::getenv("MATSTEER_THREADS"); env != nullptr && *env != '\0') {
    try {
      n = static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      n = 0;
    }
  }
  if (n == 0) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return n;
}

/// Runs body(i) for i in [0, count). Each index is handled by exactly one
/// worker and results must be written to per-index slots, so the outcome
/// does not depend on the number of threads.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, std::size_t min_per_thread = 1) {
  const std::size_t workers =
      std::min(thread_budget(), std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_per_thread)));
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace matsteer
