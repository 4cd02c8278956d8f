#pragma once

#include <cstddef>

namespace adapterlab {

struct LrSchedule {
  double peak_lr = 1e-3;
  std::size_t total_steps = 1;
  double warmup_fraction = 0.1;

  void validate() const;
};

/// Linear warmup from 0 to peak over the first warmup_fraction of the
/// steps, then linear decay to 0 at total_steps.
double lr_at(std::size_t step, const LrSchedule& schedule);

}  // namespace adapterlab
