#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace elnet {

// Per-thread worker budget for data-parallel loops. Each loop index is
// handled entirely by one worker in ascending order within its block, so
// results are bitwise independent of the worker count. Threads spawned by
// parallel_for start with the default budget of 1, which keeps nested
// parallelism off.
inline int& num_threads_ref() {
  static thread_local int n = 1;
  return n;
}
inline int num_threads() { return num_threads_ref(); }
inline void set_num_threads(int n) { num_threads_ref() = n < 1 ? 1 : n; }

template <typename Fn>
void parallel_for(int64_t n, const Fn& fn) {
  const int workers = num_threads();
  if (workers <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int64_t t = std::min<int64_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(t));
  std::exception_ptr error;
  std::mutex error_mu;
  for (int64_t w = 0; w < t; ++w) {
    const int64_t lo = n * w / t;
    const int64_t hi = n * (w + 1) / t;
    pool.emplace_back([lo, hi, &fn, &error, &error_mu]() {
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace elnet
