#include "adapterlab/strategy.hpp"

#include <charconv>
#include <vector>

#include "adapterlab/errors.hpp"

namespace adapterlab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_size(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw InputError("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw InputError("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string strategy_kind(const TuningStrategy& strategy) {
  return std::visit(overloaded{[](const FullFineTune&) { return std::string("full"); },
                               [](const VariableFineTune&) { return std::string("top_k"); },
                               [](const LayerNormOnly&) { return std::string("layernorm"); },
                               [](const AdapterTuning&) { return std::string("adapter"); }},
                    strategy);
}

std::string format_strategy(const TuningStrategy& strategy) {
  return std::visit(overloaded{[](const FullFineTune&) { return std::string("full"); },
                               [](const VariableFineTune& v) { return "top:" + std::to_string(v.top_layers); },
                               [](const LayerNormOnly&) { return std::string("layernorm"); },
                               [](const AdapterTuning& a) {
                                 // Shortest text that parses back to the same double.
                                 char buf[32];
                                 auto res = std::to_chars(buf, buf + sizeof buf, a.adapter.init_std);
                                 return "adapter:" + std::to_string(a.adapter.bottleneck) + ':' +
                                        std::string(buf, res.ptr) + ':' + std::string(to_string(a.adapter.nonlinearity));
                               }},
                    strategy);
}

TuningStrategy parse_strategy(std::string_view text) {
  auto parts = split(text, ':');
  const std::string_view head = parts[0];
  if (head == "full" && parts.size() == 1) return FullFineTune{};
  if (head == "layernorm" && parts.size() == 1) return LayerNormOnly{};
  if (head == "top" && parts.size() == 2) return VariableFineTune{parse_size(parts[1], "top-layer count")};
  if (head == "adapter" && parts.size() >= 2 && parts.size() <= 4) {
    AdapterConfig cfg;
    cfg.bottleneck = parse_size(parts[1], "adapter size");
    if (parts.size() >= 3) cfg.init_std = parse_double(parts[2], "adapter init std");
    if (parts.size() == 4) cfg.nonlinearity = parse_nonlinearity(parts[3]);
    return AdapterTuning{cfg};
  }
  throw InputError("unknown tuning strategy '" + std::string(text) +
                   "' (expected full, layernorm, top:N or adapter:M[:STD[:ACT]])");
}

void validate_strategy(const TuningStrategy& strategy, const ModelConfig& config) {
  if (const auto* v = std::get_if<VariableFineTune>(&strategy); v && v->top_layers > config.layers) {
    throw RangeError("top-layer count " + std::to_string(v->top_layers) + " exceeds " +
                     std::to_string(config.layers) + " layers");
  }
  if (const auto* a = std::get_if<AdapterTuning>(&strategy)) a->adapter.validate(config.width);
}

ShapeMap task_model_shapes(const ModelConfig& config, const TuningStrategy& strategy, std::size_t num_classes) {
  if (num_classes < 1) throw InputError("task needs at least one class");
  ShapeMap shapes = encoder_parameter_shapes(config, false);
  shapes.emplace(names::kHeadWeight, Shape{config.width, num_classes});
  shapes.emplace(names::kHeadBias, Shape{num_classes});
  if (const auto* a = std::get_if<AdapterTuning>(&strategy)) {
    shapes.merge(adapter_parameter_shapes(config, a->adapter.bottleneck));
  }
  return shapes;
}

bool is_trainable(std::string_view name, const TuningStrategy& strategy, const ModelConfig& config) {
  if (names::is_head(name)) return true;
  return std::visit(overloaded{[](const FullFineTune&) { return true; },
                               [&](const VariableFineTune& v) {
                                 if (v.top_layers == config.layers) return true;
                                 auto layer = names::layer_of(name);
                                 return layer && *layer + v.top_layers >= config.layers;
                               },
                               [&](const LayerNormOnly&) { return names::is_layer_norm(name); },
                               [&](const AdapterTuning&) {
                                 return names::is_adapter(name) || names::is_layer_norm(name);
                               }},
                    strategy);
}

ParameterPartition trainable_partition(const TuningStrategy& strategy, const ModelConfig& config,
                                       std::size_t num_classes) {
  validate_strategy(strategy, config);
  ParameterPartition part;
  for (const auto& [name, shape] : task_model_shapes(config, strategy, num_classes)) {
    if (is_trainable(name, strategy, config)) {
      part.trainable.insert(name);
      part.trainable_count += shape_numel(shape);
    } else {
      part.frozen.insert(name);
      part.frozen_count += shape_numel(shape);
    }
  }
  return part;
}

}  // namespace adapterlab
