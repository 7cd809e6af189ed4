#pragma once

#include <cstddef>
#include <functional>

namespace noisegeom {

/// Worker count: NOISEGEOM_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs task(i) for i in [0, count) on up to worker_count() threads.
/// Tasks must write only to their own output slot; the first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

}  // namespace noisegeom
