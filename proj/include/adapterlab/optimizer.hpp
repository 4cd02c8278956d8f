#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "adapterlab/transformer.hpp"

namespace adapterlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>, std::less<>> first_moment;
  std::map<std::string, std::vector<double>, std::less<>> second_moment;
};

/// One bias-corrected Adam update on `trainable`. Missing gradients count as
/// zero. A gradient on any tensor in `frozen` is a freezing breach and throws
/// ContractError before anything is modified.
void adam_step(ParameterMap& trainable, const ParameterMap& frozen, AdamState& state, const AdamConfig& config,
               double lr);

}  // namespace adapterlab
