#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <variant>

#include "adapterlab/adapter.hpp"
#include "adapterlab/transformer.hpp"

namespace adapterlab {

struct FullFineTune {
  bool operator==(const FullFineTune&) const = default;
};

// Trains the top `top_layers` Transformer layers plus the head. With
// top_layers == L the embeddings are trained too, so it equals FullFineTune.
struct VariableFineTune {
  std::size_t top_layers = 0;
  bool operator==(const VariableFineTune&) const = default;
};

struct LayerNormOnly {
  bool operator==(const LayerNormOnly&) const = default;
};

struct AdapterTuning {
  AdapterConfig adapter;
  bool operator==(const AdapterTuning&) const = default;
};

using TuningStrategy = std::variant<FullFineTune, VariableFineTune, LayerNormOnly, AdapterTuning>;

// Short label used in reports: "full", "top_k", "layernorm", "adapter".
std::string strategy_kind(const TuningStrategy& strategy);

// Round-trippable description, e.g. "top:3" or "adapter:8:0.01:relu".
std::string format_strategy(const TuningStrategy& strategy);
TuningStrategy parse_strategy(std::string_view text);

void validate_strategy(const TuningStrategy& strategy, const ModelConfig& config);

using NameSet = std::set<std::string, std::less<>>;

struct ParameterPartition {
  NameSet trainable;
  NameSet frozen;
  std::size_t trainable_count = 0;
  std::size_t frozen_count = 0;

  std::size_t total_count() const { return trainable_count + frozen_count; }
  double trainable_fraction() const {
    return static_cast<double>(trainable_count) / static_cast<double>(total_count());
  }
};

/// Every parameter a task model under `strategy` consists of: the encoder,
/// the task head and, for adapter tuning, the adapters.
ShapeMap task_model_shapes(const ModelConfig& config, const TuningStrategy& strategy, std::size_t num_classes);

bool is_trainable(std::string_view name, const TuningStrategy& strategy, const ModelConfig& config);

ParameterPartition trainable_partition(const TuningStrategy& strategy, const ModelConfig& config,
                                       std::size_t num_classes);

}  // namespace adapterlab
