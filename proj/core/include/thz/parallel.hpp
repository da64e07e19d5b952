#pragma once

#include <cstddef>
#include <functional>

namespace thz {

/// Worker count for pixel- and sample-parallel loops. Honors the THZ_THREADS
/// environment variable as an upper bound; defaults to hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Iterations must write only to slots they own,
/// so results never depend on scheduling. Exceptions from workers are rethrown
/// (the one from the lowest failing index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace thz
