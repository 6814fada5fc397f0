#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace randcon {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> value{0};
  return value;
}

// Set inside pool workers; nested parallel_for calls then run serially.
inline thread_local bool in_worker = false;
}  // namespace detail

// 0 means "use hardware concurrency".
inline void set_thread_count(int threads) noexcept { detail::thread_setting() = std::max(threads, 0); }

inline int thread_count() noexcept {
  const int configured = detail::thread_setting();
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n). Every index writes to its own output slot, so
// results never depend on scheduling. The first exception (lowest index among
// those observed) is rethrown after all workers join. Calls made from inside
// a worker run serially.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, int threads = 0) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(threads > 0 ? threads : thread_count()));
  if (workers <= 1 || detail::in_worker) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = n;
  auto worker = [&] {
    detail::in_worker = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace randcon
