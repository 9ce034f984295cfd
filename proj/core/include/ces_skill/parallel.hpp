#pragma once

#include <cstddef>
#include <functional>

namespace ces_skill::parallel {

// Worker count: CES_SKILL_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
std::size_t thread_count();

// Calls fn(i) for i in [0, n) on up to `threads` workers (0 = thread_count()).
// Work items must write only to their own slot; the exception thrown by the
// lowest failing index is rethrown after all workers finish.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn,
                    std::size_t threads = 0);

}  // namespace ces_skill::parallel
