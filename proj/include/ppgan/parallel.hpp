#pragma once

#include <cstddef>
#include <functional>

namespace ppgan {

/// Worker cap: PPG_THREADS if set (>= 1), else hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) across worker_count() threads. Each index is
/// processed exactly once; results must be written to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace ppgan
