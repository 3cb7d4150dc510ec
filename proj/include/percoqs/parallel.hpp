#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace percoqs {

/// Run body(chunk_begin, chunk_end, chunk_index) over [0, n) split into
/// `workers` contiguous chunks. Chunk boundaries depend only on (n, workers);
/// callers that need worker-independent output must combine per-item
/// results in index order, not per-chunk partials.
template <typename Body>
void parallel_chunks(std::size_t n, unsigned workers, Body&& body) {
  workers = std::max(1u, workers);
  const std::size_t chunks = std::min<std::size_t>(workers, std::max<std::size_t>(n, 1));
  if (chunks <= 1) {
    body(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = n * c / chunks;
    const std::size_t hi = n * (c + 1) / chunks;
    pool.emplace_back([&, lo, hi, c] {
      try {
        body(lo, hi, c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Evaluate fn(i) for i in [0, n) and return results in index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, unsigned workers, Fn&& fn) {
  std::vector<T> out(n);
  parallel_chunks(n, workers, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = fn(i);
  });
  return out;
}

}  // namespace percoqs
