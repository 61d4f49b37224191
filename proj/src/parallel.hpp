#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

namespace chc::detail {

// OpenMP loop over [0, n) that carries the first exception out of the region
// instead of terminating.
template <class F>
void parallel_for(std::int64_t n, F&& body) {
  std::exception_ptr error;
  std::mutex m;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(m);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace chc::detail
