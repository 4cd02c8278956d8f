#include "adapterlab/transformer.hpp"

#include <cmath>
#include <string>

#include "adapterlab/adapter.hpp"
#include "adapterlab/errors.hpp"
#include "adapterlab/random.hpp"

namespace adapterlab {

void ModelConfig::validate() const {
  if (layers == 0 || width == 0 || heads == 0 || ffn_width == 0 || vocab == 0 || max_len == 0) {
    throw InputError("model config: all extents must be positive");
  }
  if (width % heads != 0) {
    throw InputError("model config: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (vocab < 4) throw InputError("model config: vocab must be >= 4 (CLS, MASK and two content tokens)");
  if (max_len < 2) throw InputError("model config: max_len must be >= 2");
  if (!(layer_norm_eps > 0.0)) throw InputError("model config: layer_norm_eps must be positive");
}

namespace names {

std::string layer(std::size_t index, std::string_view suffix) {
  std::string s = "layer." + std::to_string(index) + ".";
  s.append(suffix);
  return s;
}

std::optional<std::size_t> layer_of(std::string_view name) {
  constexpr std::string_view prefix = "layer.";
  if (!name.starts_with(prefix)) return std::nullopt;
  std::size_t value = 0, i = prefix.size();
  if (i >= name.size() || !std::isdigit(static_cast<unsigned char>(name[i]))) return std::nullopt;
  for (; i < name.size() && std::isdigit(static_cast<unsigned char>(name[i])); ++i) value = value * 10 + (name[i] - '0');
  return value;
}

bool is_layer_norm(std::string_view name) { return name.ends_with(".gamma") || name.ends_with(".beta"); }
bool is_adapter(std::string_view name) { return name.find(".adapter.") != std::string_view::npos; }
bool is_head(std::string_view name) { return name.starts_with("head."); }
bool is_embedding(std::string_view name) { return name.starts_with("embed."); }

}  // namespace names

ShapeMap encoder_parameter_shapes(const ModelConfig& c, bool include_mlm_head) {
  ShapeMap shapes;
  const std::size_t d = c.width, f = c.ffn_width;
  shapes.emplace(names::kTokenEmbedding, Shape{c.vocab, d});
  shapes.emplace(names::kPositionEmbedding, Shape{c.max_len, d});
  shapes.emplace(names::kEmbedNormGamma, Shape{d});
  shapes.emplace(names::kEmbedNormBeta, Shape{d});
  for (std::size_t l = 0; l < c.layers; ++l) {
    for (const char* proj : {"query", "key", "value", "output"}) {
      shapes.emplace(names::layer(l, std::string("attn.") + proj + ".weight"), Shape{d, d});
      shapes.emplace(names::layer(l, std::string("attn.") + proj + ".bias"), Shape{d});
    }
    shapes.emplace(names::layer(l, "ln_attn.gamma"), Shape{d});
    shapes.emplace(names::layer(l, "ln_attn.beta"), Shape{d});
    shapes.emplace(names::layer(l, "ffn.in.weight"), Shape{d, f});
    shapes.emplace(names::layer(l, "ffn.in.bias"), Shape{f});
    shapes.emplace(names::layer(l, "ffn.out.weight"), Shape{f, d});
    shapes.emplace(names::layer(l, "ffn.out.bias"), Shape{d});
    shapes.emplace(names::layer(l, "ln_ffn.gamma"), Shape{d});
    shapes.emplace(names::layer(l, "ln_ffn.beta"), Shape{d});
  }
  if (include_mlm_head) {
    shapes.emplace(names::kMlmWeight, Shape{d, c.vocab});
    shapes.emplace(names::kMlmBias, Shape{c.vocab});
  }
  return shapes;
}

std::size_t encoder_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.width, f = c.ffn_width;
  const std::size_t embeddings = c.vocab * d + c.max_len * d + 2 * d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t ffn = d * f + f + f * d + d;
  const std::size_t norms = 2 * 2 * d;
  return embeddings + c.layers * (attention + ffn + norms);
}

std::size_t mlm_head_parameter_count(const ModelConfig& c) { return c.width * c.vocab + c.vocab; }

BaseParameters BaseParameters::initialize(const ModelConfig& config, std::uint64_t seed, double init_std) {
  config.validate();
  BaseParameters base;
  base.config = config;
  Rng rng(seed);
  // std::map iteration order keeps initialization deterministic.
  for (const auto& [name, shape] : encoder_parameter_shapes(config, true)) {
    std::vector<double> values(shape_numel(shape), 0.0);
    if (name.ends_with(".gamma")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (name.ends_with(".weight") || (names::is_embedding(name) && !names::is_layer_norm(name))) {
      for (double& v : values) v = sample_truncated_normal(rng, init_std);
    }
    base.tensors.emplace(name, Tensor(shape, std::move(values)));
  }
  return base;
}

const Tensor& BaseParameters::get(std::string_view name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw NotFoundError("base parameter '" + std::string(name) + "' not found");
  return it->second;
}

BaseParameters BaseParameters::frozen_copy() const {
  BaseParameters out;
  out.config = config;
  for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.clone(false));
  return out;
}

std::size_t BaseParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel();
  return n;
}

ModelView::ModelView(std::shared_ptr<const BaseParameters> base, ParameterMap task, Nonlinearity adapter_nonlinearity)
    : base_(std::move(base)), task_(std::move(task)), adapter_nonlinearity_(adapter_nonlinearity) {
  if (!base_) throw ContractError("model view needs base parameters");
}

const Tensor* ModelView::find(std::string_view name) const {
  if (auto it = task_.find(name); it != task_.end()) return &it->second;
  if (auto it = base_->tensors.find(name); it != base_->tensors.end()) return &it->second;
  return nullptr;
}

const Tensor& ModelView::get(std::string_view name) const {
  const Tensor* t = find(name);
  if (!t) throw NotFoundError("parameter '" + std::string(name) + "' not found in model view");
  return *t;
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<TokenId>>& sequences) {
  TokenBatch b;
  if (sequences.empty()) throw InputError("token batch: no sequences");
  b.batch = sequences.size();
  b.length = sequences.front().size();
  if (b.length == 0) throw InputError("token batch: empty sequence");
  b.ids.reserve(b.batch * b.length);
  for (const auto& s : sequences) {
    if (s.size() != b.length) throw InputError("token batch: sequences must share one length");
    b.ids.insert(b.ids.end(), s.begin(), s.end());
  }
  return b;
}

namespace {

Tensor sub_layer_output(const Tensor& sub, const ModelView& view, std::size_t layer, AdapterSite site) {
  if (auto adapter = find_adapter(view, layer, site)) {
    return adapter_forward(sub, *adapter, view.adapter_nonlinearity());
  }
  return sub;
}

Tensor attention(const Tensor& x, const ModelView& view, std::size_t l, ForwardTrace* trace) {
  const auto& c = view.config();
  const auto w = [&](const char* part) -> const Tensor& { return view.get(names::layer(l, part)); };
  Tensor q = ops::split_heads(ops::linear(x, w("attn.query.weight"), w("attn.query.bias")), c.heads);
  Tensor k = ops::split_heads(ops::linear(x, w("attn.key.weight"), w("attn.key.bias")), c.heads);
  Tensor v = ops::split_heads(ops::linear(x, w("attn.value.weight"), w("attn.value.bias")), c.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c.width / c.heads));
  Tensor probs = ops::softmax(ops::scale(ops::batched_matmul(q, k, /*transpose_b=*/true), inv_sqrt));
  if (trace) trace->attention.push_back(probs);
  Tensor context = ops::merge_heads(ops::batched_matmul(probs, v), c.heads);
  return ops::linear(context, w("attn.output.weight"), w("attn.output.bias"));
}

Tensor feed_forward(const Tensor& x, const ModelView& view, std::size_t l) {
  const auto w = [&](const char* part) -> const Tensor& { return view.get(names::layer(l, part)); };
  Tensor inner = ops::gelu(ops::linear(x, w("ffn.in.weight"), w("ffn.in.bias")));
  return ops::linear(inner, w("ffn.out.weight"), w("ffn.out.bias"));
}

void check_tokens(const TokenBatch& tokens, const ModelConfig& c) {
  if (tokens.batch == 0 || tokens.length == 0 || tokens.ids.size() != tokens.batch * tokens.length) {
    throw InputError("token batch: malformed (batch " + std::to_string(tokens.batch) + ", length " +
                     std::to_string(tokens.length) + ", " + std::to_string(tokens.ids.size()) + " ids)");
  }
  if (tokens.length > c.max_len) {
    throw RangeError("sequence length " + std::to_string(tokens.length) + " exceeds max_len " + std::to_string(c.max_len));
  }
  for (TokenId id : tokens.ids) {
    if (id >= c.vocab) throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(c.vocab));
  }
}

}  // namespace

Tensor encoder_forward(const TokenBatch& tokens, const ModelView& view, ForwardTrace* trace) {
  const auto& c = view.config();
  check_tokens(tokens, c);
  const Shape prefix{tokens.batch, tokens.length};
  std::vector<std::size_t> positions(tokens.batch * tokens.length);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % tokens.length;

  Tensor h = ops::add(ops::embedding(view.get(names::kTokenEmbedding), tokens.ids, prefix),
                      ops::embedding(view.get(names::kPositionEmbedding), positions, prefix));
  h = ops::layer_norm(h, view.get(names::kEmbedNormGamma), view.get(names::kEmbedNormBeta), c.layer_norm_eps);

  for (std::size_t l = 0; l < c.layers; ++l) {
    Tensor a = sub_layer_output(attention(h, view, l, trace), view, l, AdapterSite::kAttention);
    h = ops::layer_norm(ops::add(a, h), view.get(names::layer(l, "ln_attn.gamma")),
                        view.get(names::layer(l, "ln_attn.beta")), c.layer_norm_eps);
    Tensor f = sub_layer_output(feed_forward(h, view, l), view, l, AdapterSite::kFeedForward);
    h = ops::layer_norm(ops::add(f, h), view.get(names::layer(l, "ln_ffn.gamma")),
                        view.get(names::layer(l, "ln_ffn.beta")), c.layer_norm_eps);
  }
  return h;
}

Tensor classify(const TokenBatch& tokens, const ModelView& view) {
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    if (b * tokens.length >= tokens.ids.size() || tokens.ids[b * tokens.length] != kClsToken) {
      throw ContractError("classify: sequence " + std::to_string(b) + " does not start with the CLS token");
    }
  }
  Tensor hidden = encoder_forward(tokens, view);
  Tensor cls = ops::select_position(hidden, 0);
  return ops::linear(cls, view.get(names::kHeadWeight), view.get(names::kHeadBias));
}

Tensor mlm_logits(const Tensor& hidden, std::span<const std::size_t> flat_positions, const ModelView& view) {
  Tensor rows = ops::gather_rows(hidden, flat_positions);
  return ops::linear(rows, view.get(names::kMlmWeight), view.get(names::kMlmBias));
}

}  // namespace adapterlab
