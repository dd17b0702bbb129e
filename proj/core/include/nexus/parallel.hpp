#pragma once

#include <cstddef>
#include <functional>

namespace nexus {

/// Sets the worker count used by parallel_for. 0 picks the hardware
/// concurrency. Thread-compatible: call before spawning parallel work.
void set_threads(unsigned n);
unsigned threads();

/// Runs fn(i) for i in [0, n). Tasks must write to disjoint outputs;
/// iteration-to-worker assignment is static (contiguous blocks), so
/// results are bit-identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace nexus
