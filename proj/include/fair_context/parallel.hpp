#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace fairctx {

/// Default worker count: FAIR_CONTEXT_JOBS if set, else the logical core count.
inline std::size_t default_jobs() {
  if (const char* env = std::getenv("FAIR_CONTEXT_JOBS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(task, worker) for task in [0, count) on up to `jobs` threads.
/// If tasks throw, the exception of the lowest failing task is rethrown.
inline void parallel_for(std::size_t count, std::size_t jobs,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  std::vector<std::exception_ptr> errors(count);
  if (jobs == 1) {
    for (std::size_t t = 0; t < count; ++t) {
      try {
        fn(t, 0);
      } catch (...) {
        errors[t] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= count || stop.load()) return;
          try {
            fn(t, w);
          } catch (...) {
            errors[t] = std::current_exception();
            stop.store(true);
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fairctx
