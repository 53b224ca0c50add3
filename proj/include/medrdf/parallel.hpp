#pragma once

#include <cstddef>
#include <functional>

namespace medrdf {

// 0 maps to the hardware concurrency (at least 1).
unsigned resolve_threads(unsigned requested) noexcept;

// Runs body(worker, index) for every index in [0, count). Indices are handed
// out dynamically, so callers must make each index's result independent of
// which worker ran it. The first exception thrown by a body is rethrown.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(unsigned worker, std::size_t index)>& body);

}  // namespace medrdf
