#include "adapterlab/schedule.hpp"

#include <string>

#include "adapterlab/errors.hpp"

namespace adapterlab {

void LrSchedule::validate() const {
  if (!(peak_lr > 0.0)) throw InputError("peak_lr must be positive");
  if (total_steps == 0) throw InputError("total_steps must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw InputError("warmup_fraction must lie in (0, 1)");
}

double lr_at(std::size_t step, const LrSchedule& s) {
  s.validate();
  if (step > s.total_steps) {
    throw RangeError("step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
  }
  const double t = static_cast<double>(step);
  const double total = static_cast<double>(s.total_steps);
  const double warmup = s.warmup_fraction * total;
  if (t <= warmup) return s.peak_lr * t / warmup;
  return s.peak_lr * (total - t) / (total - warmup);
}

}  // namespace adapterlab
