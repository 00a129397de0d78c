#pragma once

#include <cstddef>
#include <functional>

namespace splatforge {

/// Worker count: SPLATFORGE_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index must touch disjoint output memory;
/// results are then independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace splatforge
