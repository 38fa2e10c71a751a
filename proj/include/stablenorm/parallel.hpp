#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace stablenorm {

/// Evaluates fn(0..count-1) on up to `workers` threads. Results are stored by
/// input index, so the output never depends on scheduling. The first exception
/// thrown by any task is rethrown after all workers join.
template <typename T>
std::vector<T> parallel_map(std::size_t count, int workers, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(count);
  const std::size_t width = std::max<std::size_t>(1, std::min<std::size_t>(count, workers > 0 ? workers : 1));
  if (width == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < width; ++w) {
    pool.emplace_back([&, w] {
      (void)w;
      for (std::size_t i = next++; i < count; i = next++) {
        if (failed) return;
        try {
          out[i] = fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace stablenorm
