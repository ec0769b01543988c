#pragma once

#include <cstddef>
#include <functional>

namespace advfield {

// Worker cap for data-parallel loops: min(tasks, hardware threads), further
// capped by the ADVFIELD_THREADS environment variable when set.
std::size_t worker_count(std::size_t tasks);

// Runs fn(i) for i in [0,n). Work is split across workers; results must be
// written to per-index slots so the outcome is independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace advfield
