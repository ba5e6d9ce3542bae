#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <vector>

#include <omp.h>

namespace otrw {

// Index-parallel map kernels. Each result lands in slot i, so the output does
// not depend on the thread count; reductions over the returned vector are
// done serially by the caller in index order.
//
// map_serial is the reference implementation; tests check map_parallel
// against it bit for bit.

template <class T, class F>
std::vector<T> map_serial(std::size_t count, F&& fn) {
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(fn(i));
  return out;
}

template <class T, class F>
std::vector<T> map_parallel(std::size_t count, int jobs, F&& fn) {
  if (jobs <= 1 || count <= 1) return map_serial<T>(count, fn);
  std::vector<T> out(count);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (long long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline int available_threads() { return omp_get_max_threads(); }

}  // namespace otrw
