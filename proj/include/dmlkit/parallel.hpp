#pragma once

#include <cstddef>
#include <functional>

namespace dmlkit {

/// Global worker count for parallel_for. 0 = hardware concurrency.
/// Results never depend on this value: tasks write to disjoint slots and all
/// reductions happen afterwards in index order.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Run fn(i) for i in [0, n). fn must only touch state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dmlkit
