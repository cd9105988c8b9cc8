#pragma once

#include <cstddef>
#include <functional>

namespace qutnn {

/// Number of worker threads. Reads the QUTNN_THREADS environment variable;
/// falls back to the hardware concurrency. Always at least 1.
std::size_t thread_count();

/// Runs body(i) for i in [0, count). Work is split by index, and each index
/// writes only its own outputs, so the result does not depend on scheduling.
/// Exceptions thrown by the body are collected and the first one rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace qutnn
