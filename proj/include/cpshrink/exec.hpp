#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <vector>

namespace cpshrink {

// Serial runs the reference loop; Parallel distributes the same independent
// work items over OpenMP threads. Both produce bit-identical results because
// every work item owns its seed and its output slot.
enum class Exec { Serial, Parallel };

/// Sets the OpenMP thread count for subsequent Parallel kernels (0 = runtime default).
void set_thread_count(int threads);
int thread_count();

/// Runs f(i) for i in [0, n). In Parallel mode iterations are spread over
/// OpenMP threads; an exception from any iteration is rethrown after the loop
/// (the one with the lowest index, so the report does not depend on timing).
template <typename F>
void parallel_for(std::int64_t n, Exec exec, F&& f) {
  if (exec == Exec::Serial) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n > 0 ? n : 0));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Fixed-order pairwise tree sum; independent of how the inputs were produced.
double pairwise_sum(std::span<const double> values);

}  // namespace cpshrink
