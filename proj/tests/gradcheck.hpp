#pragma once

// Central finite-difference oracle for reverse-mode gradients. Test-only;
// it never calls backward itself except to read the autodiff side.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adapterlab/tensor.hpp"

namespace adapterlab::testing {

struct GradCheckResult {
  double max_error = 0.0;  // |autodiff - fd| / max(1, |fd|)
  std::string worst;       // "<tensor index>[<element>]"
  std::size_t checked = 0;
};

inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                       double h = 1e-5) {
  for (auto& p : params) p.clear_grad();
  backward(loss_fn());
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<double> analytic(params[t].numel(), 0.0);
    if (params[t].has_grad()) std::copy(params[t].grad().begin(), params[t].grad().end(), analytic.begin());
    auto values = params[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      double up, down;
      {
        NoGradGuard guard;
        values[i] = orig + h;
        up = loss_fn().item();
        values[i] = orig - h;
        down = loss_fn().item();
        values[i] = orig;
      }
      const double fd = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
      ++result.checked;
      if (err > result.max_error) {
        result.max_error = err;
        result.worst = std::to_string(t) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace adapterlab::testing
