#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace eslasso {

/// Thread count from an explicit request, else ESLASSO_THREADS, else 1.
/// Values below 1 are treated as 1.
int resolve_threads(std::optional<int> requested);

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Work is handed
/// out by index, so results written to slot i do not depend on scheduling.
/// The first exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace eslasso
