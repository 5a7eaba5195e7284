#pragma once

#include <cstddef>
#include <functional>

namespace depcop {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency, overridable through DEPCOP_THREADS or set_thread_count.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
/// write results into per-index slots so the output never depends on
/// scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace depcop
