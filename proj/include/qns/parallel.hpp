#pragma once

#include <cstddef>
#include <functional>

namespace qns {

/// Worker count used by parallel_for. Defaults to QNS_THREADS when set, else 1.
int thread_count();
void set_thread_count(int threads);

/// Runs body(i) for i in [0, n) on a bounded pool. Results must be written to
/// index-addressed slots so the outcome does not depend on scheduling. The
/// first exception thrown by any task is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qns
