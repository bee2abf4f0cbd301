#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace flowcast::detail {

/// Runs body(begin, end) over [0, n) split into `chunks` fixed ranges. Chunk
/// boundaries depend only on n and chunks, never on the thread count, so
/// callers that reduce per-chunk results in chunk order stay deterministic.
template <typename Body>
void parallel_chunks(std::size_t n, std::size_t chunks, Body&& body) {
  if (n == 0) return;
  chunks = std::clamp<std::size_t>(chunks, 1, n);
  auto range = [&](std::size_t c) {
    return std::pair{c * n / chunks, (c + 1) * n / chunks};
  };
  const std::size_t workers =
      std::min<std::size_t>(chunks, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      auto [b, e] = range(c);
      body(c, b, e);
    }
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += workers) {
        auto [b, e] = range(c);
        try {
          body(c, b, e);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace flowcast::detail
