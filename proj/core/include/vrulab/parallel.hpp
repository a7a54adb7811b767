#pragma once

#include <cstddef>
#include <functional>

namespace vrulab {

// Worker count from VRU_LAB_THREADS; 0 or unset means hardware concurrency.
int thread_count();

// Runs fn(i) for i in [0, n) on up to thread_count() threads. Callers own
// result ordering; fn must only write to slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vrulab
