#include "ces_skill/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <thread>
#include <vector>

namespace ces_skill::parallel {

std::size_t thread_count() {
  if (const char* env = std::getenv("CES_SKILL_THREADS")) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
    if (ec == std::errc() && *ptr == '\0' && v > 0) return v;
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn,
                    std::size_t threads) {
  if (threads == 0) threads = thread_count();
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ces_skill::parallel
