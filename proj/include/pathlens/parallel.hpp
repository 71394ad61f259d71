#pragma once

#include <cstddef>
#include <functional>

namespace pathlens {

/// Worker cap from PATHLENS_THREADS (unset or 0 means hardware concurrency).
std::size_t worker_count();

/// Runs body(0..count-1) across worker threads. Each index must write only its
/// own outputs. If any task throws, the exception of the lowest failing index
/// is rethrown after all workers finish, so failures are scheduling-independent.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace pathlens
