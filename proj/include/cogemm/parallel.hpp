#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include "cogemm/tuner.hpp"

namespace cogemm {

// Runs body(i) for i in [0, n). Under Exec::Parallel the iterations are
// spread over OpenMP threads; each body must write only to its own slot.
// The first exception (lowest index) is rethrown once the loop finishes.
template <typename Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace cogemm
