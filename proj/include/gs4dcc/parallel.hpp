#pragma once

#include <cstddef>
#include <functional>

namespace gs4dcc {

// Worker count: hardware concurrency capped by GS4D_THREADS when set.
size_t worker_count();

// Splits [0, n) into contiguous chunks, one per worker. Each index is visited
// exactly once; callers write to disjoint outputs so results do not depend on
// the split.
void parallel_for(size_t n, const std::function<void(size_t begin, size_t end)>& body);

}  // namespace gs4dcc
