#include <exception>

#include <omp.h>

#include "chordmob/harness.hpp"

namespace chordmob::harness {

std::vector<std::vector<Tally>> run_points(const std::vector<SweepPoint>& points,
                                           const std::function<std::vector<Tally>(const SweepPoint&)>& fn,
                                           SweepMode mode) {
  const auto n = static_cast<std::ptrdiff_t>(points.size());
  std::vector<std::vector<Tally>> out(points.size());

  if (mode == SweepMode::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = fn(points[i]);
    return out;
  }

  // Each point owns its overlay, scheduler and RNG streams, so workers share
  // nothing but the output slots.
  std::vector<std::exception_ptr> errors(points.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = fn(points[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace chordmob::harness
