#pragma once

#include <cstddef>
#include <functional>

namespace gravity {

/// Worker count from GRAVITY_THREADS (default 1).
std::size_t thread_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks;
/// callers write only to slots owned by i, so results do not depend on the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gravity
