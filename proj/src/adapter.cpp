#include "adapterlab/adapter.hpp"

#include <string>

#include "adapterlab/errors.hpp"

namespace adapterlab {

bool AdapterConfig::validate(std::size_t width) const {
  if (bottleneck < 1 || bottleneck > width) {
    throw RangeError("adapter size " + std::to_string(bottleneck) + " outside [1, " + std::to_string(width) + "]");
  }
  if (!(init_std >= 0.0)) throw RangeError("adapter init std must be >= 0");
  return bottleneck == width;
}

std::size_t AdapterParameters::element_count() const {
  return down_weight.numel() + down_bias.numel() + up_weight.numel() + up_bias.numel();
}

Tensor adapter_forward(const Tensor& x, const AdapterParameters& p, Nonlinearity nonlinearity) {
  if (x.shape().back() != p.width()) {
    throw DimensionError("adapter: input width " + std::to_string(x.shape().back()) + " vs adapter width " +
                         std::to_string(p.width()));
  }
  Tensor hidden = ops::activate(ops::linear(x, p.down_weight, p.down_bias), nonlinearity);
  return ops::add(x, ops::linear(hidden, p.up_weight, p.up_bias));
}

namespace {

Tensor sampled(Shape shape, double sigma, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& e : v) e = sample_truncated_normal(rng, sigma);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

AdapterParameters init_adapter(std::size_t width, const AdapterConfig& config, Rng& rng) {
  config.validate(width);
  const std::size_t m = config.bottleneck;
  const double s = config.init_std;
  AdapterParameters p;
  p.down_weight = sampled({width, m}, s, rng);
  p.down_bias = sampled({m}, s, rng);
  p.up_weight = sampled({m, width}, s, rng);
  p.up_bias = sampled({width}, s, rng);
  return p;
}

std::vector<LayerAdapters> attach_adapters(const BaseParameters& base, const AdapterConfig& config, Rng& rng) {
  std::vector<LayerAdapters> out;
  out.reserve(base.config.layers);
  for (std::size_t l = 0; l < base.config.layers; ++l) {
    LayerAdapters la;
    la.after_attention = init_adapter(base.config.width, config, rng);
    la.after_feed_forward = init_adapter(base.config.width, config, rng);
    out.push_back(std::move(la));
  }
  return out;
}

std::size_t adapter_param_count(std::size_t width, std::size_t bottleneck) {
  return 2 * bottleneck * width + width + bottleneck;
}

std::size_t layernorm_param_count(std::size_t width, std::size_t num_layernorms) { return 2 * width * num_layernorms; }

std::string adapter_param_name(std::size_t layer, AdapterSite site, std::string_view part) {
  std::string suffix = site == AdapterSite::kAttention ? "adapter.attn." : "adapter.ffn.";
  suffix.append(part);
  return names::layer(layer, suffix);
}

ShapeMap adapter_parameter_shapes(const ModelConfig& config, std::size_t m) {
  ShapeMap shapes;
  const std::size_t d = config.width;
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (AdapterSite site : {AdapterSite::kAttention, AdapterSite::kFeedForward}) {
      shapes.emplace(adapter_param_name(l, site, "down.weight"), Shape{d, m});
      shapes.emplace(adapter_param_name(l, site, "down.bias"), Shape{m});
      shapes.emplace(adapter_param_name(l, site, "up.weight"), Shape{m, d});
      shapes.emplace(adapter_param_name(l, site, "up.bias"), Shape{d});
    }
  }
  return shapes;
}

void store_adapters(ParameterMap& into, const std::vector<LayerAdapters>& adapters, bool requires_grad) {
  for (std::size_t l = 0; l < adapters.size(); ++l) {
    for (AdapterSite site : {AdapterSite::kAttention, AdapterSite::kFeedForward}) {
      const AdapterParameters& p =
          site == AdapterSite::kAttention ? adapters[l].after_attention : adapters[l].after_feed_forward;
      into.insert_or_assign(adapter_param_name(l, site, "down.weight"), p.down_weight.clone(requires_grad));
      into.insert_or_assign(adapter_param_name(l, site, "down.bias"), p.down_bias.clone(requires_grad));
      into.insert_or_assign(adapter_param_name(l, site, "up.weight"), p.up_weight.clone(requires_grad));
      into.insert_or_assign(adapter_param_name(l, site, "up.bias"), p.up_bias.clone(requires_grad));
    }
  }
}

std::optional<AdapterParameters> find_adapter(const ModelView& view, std::size_t layer, AdapterSite site) {
  const auto& task = view.task_parameters();
  auto get = [&](std::string_view part) -> const Tensor* {
    auto it = task.find(adapter_param_name(layer, site, part));
    return it == task.end() ? nullptr : &it->second;
  };
  const Tensor* dw = get("down.weight");
  if (!dw) return std::nullopt;
  const Tensor* db = get("down.bias");
  const Tensor* uw = get("up.weight");
  const Tensor* ub = get("up.bias");
  if (!db || !uw || !ub) {
    throw ContractError("incomplete adapter at layer " + std::to_string(layer));
  }
  return AdapterParameters{*dw, *db, *uw, *ub};
}

}  // namespace adapterlab
