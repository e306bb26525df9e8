#pragma once

#include <omp.h>

#include <algorithm>
#include <cstddef>
#include <exception>

namespace fixpoint {

/// Number of OpenMP threads available when the caller asks for "all".
inline int hardware_workers() { return std::max(1, omp_get_max_threads()); }

/// Runs fn(i) for i in [0, n) on `workers` OpenMP threads. The first
/// exception thrown by any iteration is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(fixpoint_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace fixpoint
