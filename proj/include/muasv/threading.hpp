#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "muasv/types.hpp"

namespace muasv {

// Caps the number of worker threads used by parallel_for. 0 restores the
// hardware default.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// thread; fn must only write state owned by index i, so results are bitwise
// identical for any thread count.
template <typename Fn>
void parallel_for(Index n, Fn&& fn) {
  if (n <= 0) return;
  const int want = max_threads();
  const Index max_chunks = (n + 63) / 64;  // no point spawning for tiny loops
  const int threads = static_cast<int>(std::min<Index>(want, max_chunks));
  if (threads <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }

  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto run_range = [&](Index begin, Index end) {
    try {
      for (Index i = begin; i < end; ++i) fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads) - 1);
  const Index chunk = (n + threads - 1) / threads;
  for (int t = 1; t < threads; ++t) {
    const Index begin = t * chunk;
    const Index end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back(run_range, begin, end);
  }
  run_range(0, std::min(n, chunk));
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace muasv
