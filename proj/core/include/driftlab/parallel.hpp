#pragma once

#include <cstddef>
#include <functional>

namespace driftlab {

/// Worker cap from DRIFTLAB_THREADS: unset means hardware concurrency, 0 means serial.
unsigned threads_from_env();

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 or 1 = inline).
/// Each index runs exactly once; if any call throws, the exception of the
/// lowest failing index is rethrown after all workers finish.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace driftlab
