#pragma once

#include <memory>

#include "adapterlab/transformer.hpp"

namespace adapterlab::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 2;
  c.width = 16;
  c.heads = 2;
  c.ffn_width = 32;
  c.vocab = 10;
  c.max_len = 12;
  return c;
}

// Randomly initialized base with weights large enough for non-trivial
// attention patterns.
inline std::shared_ptr<const BaseParameters> tiny_base(std::uint64_t seed = 1, double init_std = 0.3) {
  return std::make_shared<const BaseParameters>(BaseParameters::initialize(tiny_config(), seed, init_std));
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

inline bool bit_equal(const ParameterMap& a, const ParameterMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || !bit_equal(t, it->second)) return false;
  }
  return true;
}

}  // namespace adapterlab::testing
