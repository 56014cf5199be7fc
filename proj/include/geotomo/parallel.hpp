#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace geotomo {

namespace detail {
inline std::atomic<int>& default_threads() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

inline void set_thread_count(int n) { detail::default_threads() = std::max(1, n); }
inline int thread_count() { return detail::default_threads(); }

/// Runs fn(i) for i in [0, n) over contiguous blocks. Callers write results
/// into per-index slots and reduce afterwards in index order, so output never
/// depends on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, int threads = thread_count()) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace geotomo
