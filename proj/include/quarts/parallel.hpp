#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace quarts {

/// Resolves a requested thread count; 0 means automatic (hardware, capped at 8).
[[nodiscard]] inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return std::clamp(hw, 1u, 8u);
}

/**
 * @brief Runs fn(i) for i in [0, count) across at most `threads` threads.
 *
 * Work is split into contiguous index blocks. Results must be written to
 * per-index slots by the caller; the function itself imposes no ordering.
 * The first exception thrown by any task is rethrown after all threads join.
 */
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  unsigned t = resolve_threads(threads);
  if (t <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  t = static_cast<unsigned>(std::min<std::size_t>(t, count));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(t);
  for (unsigned w = 0; w < t; ++w) {
    std::size_t begin = count * w / t;
    std::size_t end = count * (w + 1) / t;
    workers.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& worker : workers) worker.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace quarts
