#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "adapterlab/ops.hpp"
#include "adapterlab/random.hpp"
#include "adapterlab/tensor.hpp"
#include "adapterlab/transformer.hpp"

namespace adapterlab {

struct AdapterConfig {
  std::size_t bottleneck = 8;  // m
  double init_std = 1e-2;      // sigma
  Nonlinearity nonlinearity = Nonlinearity::kRelu;

  // Throws RangeError when m is outside [1, d] or sigma is negative.
  // Returns true when m == d, which is allowed but not what adapters are for.
  bool validate(std::size_t width) const;
  bool operator==(const AdapterConfig&) const = default;
};

/// One bottleneck module: x + act(x W_down + b_down) W_up + b_up.
struct AdapterParameters {
  Tensor down_weight;  // [d x m]
  Tensor down_bias;    // [m]
  Tensor up_weight;    // [m x d]
  Tensor up_bias;      // [d]

  std::size_t width() const { return down_weight.dim(0); }
  std::size_t bottleneck() const { return down_weight.dim(1); }
  std::size_t element_count() const;
};

enum class AdapterSite { kAttention, kFeedForward };

struct LayerAdapters {
  AdapterParameters after_attention;
  AdapterParameters after_feed_forward;
};

Tensor adapter_forward(const Tensor& x, const AdapterParameters& p, Nonlinearity nonlinearity);

AdapterParameters init_adapter(std::size_t width, const AdapterConfig& config, Rng& rng);

/// Two adapters per layer, one after each sub-layer's output projection.
/// The base is only read.
std::vector<LayerAdapters> attach_adapters(const BaseParameters& base, const AdapterConfig& config, Rng& rng);

std::size_t adapter_param_count(std::size_t width, std::size_t bottleneck);
std::size_t layernorm_param_count(std::size_t width, std::size_t num_layernorms);

// Naming inside a task's parameter map.
std::string adapter_param_name(std::size_t layer, AdapterSite site, std::string_view part);
ShapeMap adapter_parameter_shapes(const ModelConfig& config, std::size_t bottleneck);
void store_adapters(ParameterMap& into, const std::vector<LayerAdapters>& adapters, bool requires_grad);
std::optional<AdapterParameters> find_adapter(const ModelView& view, std::size_t layer, AdapterSite site);

}  // namespace adapterlab
