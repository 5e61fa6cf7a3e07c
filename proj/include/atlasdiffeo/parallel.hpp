#pragma once

#include <cstddef>
#include <functional>

namespace atlasdiffeo {

// Worker count: ATLASDIFFEO_THREADS if set, otherwise the hardware concurrency.
int thread_count();

// Runs body(i) for i in [0, n). Work is split into contiguous blocks; callers store
// per-index results and reduce them in index order, so results never depend on the schedule.
// If several indices throw, the exception of the lowest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace atlasdiffeo
