#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapterlab/ops.hpp"
#include "adapterlab/tensor.hpp"

namespace adapterlab {

using TokenId = std::size_t;

inline constexpr TokenId kClsToken = 0;
inline constexpr TokenId kMaskToken = 1;
inline constexpr TokenId kFirstContentToken = 2;

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t width = 32;       // d
  std::size_t heads = 2;
  std::size_t ffn_width = 64;   // f
  std::size_t vocab = 12;       // includes CLS and MASK
  std::size_t max_len = 16;     // S
  double layer_norm_eps = 1e-6;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

using ParameterMap = std::map<std::string, Tensor, std::less<>>;
using ShapeMap = std::map<std::string, Shape, std::less<>>;

namespace names {

std::string layer(std::size_t index, std::string_view suffix);

inline constexpr std::string_view kTokenEmbedding = "embed.token";
inline constexpr std::string_view kPositionEmbedding = "embed.position";
inline constexpr std::string_view kEmbedNormGamma = "embed.ln.gamma";
inline constexpr std::string_view kEmbedNormBeta = "embed.ln.beta";
inline constexpr std::string_view kMlmWeight = "mlm.weight";
inline constexpr std::string_view kMlmBias = "mlm.bias";
inline constexpr std::string_view kHeadWeight = "head.weight";
inline constexpr std::string_view kHeadBias = "head.bias";

// Layer index encoded in a "layer.<i>." name, if any.
std::optional<std::size_t> layer_of(std::string_view name);
bool is_layer_norm(std::string_view name);
bool is_adapter(std::string_view name);
bool is_head(std::string_view name);
bool is_embedding(std::string_view name);

}  // namespace names

/// Shapes of the shared encoder: embeddings, embedding layer-norm and every
/// Transformer layer. The MLM head is listed only when requested, since it
/// is used for pretraining and never by a downstream task.
ShapeMap encoder_parameter_shapes(const ModelConfig& config, bool include_mlm_head = false);

/// Closed-form encoder census (no MLM head, no task head).
std::size_t encoder_parameter_count(const ModelConfig& config);
std::size_t mlm_head_parameter_count(const ModelConfig& config);

/// Pretrained weights shared by every task. Immutable once pretraining ends.
struct BaseParameters {
  ModelConfig config;
  ParameterMap tensors;  // encoder + MLM head

  static BaseParameters initialize(const ModelConfig& config, std::uint64_t seed, double init_std = 0.02);

  const Tensor& get(std::string_view name) const;
  // Deep copy with gradient tracking turned off on every tensor.
  BaseParameters frozen_copy() const;
  std::size_t parameter_count() const;
};

/// Base parameters composed with a task's private parameters. Lookups hit
/// the task's parameters first, then the base.
class ModelView {
 public:
  ModelView() = default;
  ModelView(std::shared_ptr<const BaseParameters> base, ParameterMap task = {},
            Nonlinearity adapter_nonlinearity = Nonlinearity::kRelu);

  const ModelConfig& config() const { return base_->config; }
  const Tensor& get(std::string_view name) const;
  const Tensor* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  const BaseParameters& base() const { return *base_; }
  const std::shared_ptr<const BaseParameters>& base_ptr() const { return base_; }
  const ParameterMap& task_parameters() const { return task_; }
  ParameterMap& mutable_task_parameters() { return task_; }
  Nonlinearity adapter_nonlinearity() const { return adapter_nonlinearity_; }

 private:
  std::shared_ptr<const BaseParameters> base_;
  ParameterMap task_;
  Nonlinearity adapter_nonlinearity_ = Nonlinearity::kRelu;
};

/// Fixed-length token sequences, row-major [batch x length].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> ids;

  static TokenBatch from_sequences(const std::vector<std::vector<TokenId>>& sequences);
};

struct ForwardTrace {
  std::vector<Tensor> attention;  // per layer, [batch*heads x len x len]
};

/// Post-norm encoder. Each sub-layer computes y = LayerNorm(Adapter(sub(x)) + x),
/// where the adapter is skipped when the view holds none for that site.
Tensor encoder_forward(const TokenBatch& tokens, const ModelView& view, ForwardTrace* trace = nullptr);

/// Logits [batch x C] from the task head applied to the final CLS state.
Tensor classify(const TokenBatch& tokens, const ModelView& view);

/// MLM logits [rows x V] for the selected flat (batch*length) positions.
Tensor mlm_logits(const Tensor& hidden, std::span<const std::size_t> flat_positions, const ModelView& view);

}  // namespace adapterlab
