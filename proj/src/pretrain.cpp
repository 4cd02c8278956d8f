#include <algorithm>
#include <random>

#include "adapterlab/errors.hpp"
#include "adapterlab/random.hpp"
#include "adapterlab/trainer.hpp"

namespace adapterlab {

PretrainResult mlm_pretrain(const std::vector<std::vector<TokenId>>& corpus, const ModelConfig& model,
                            const TrainConfig& config, double mask_rate, double init_std) {
  if (corpus.empty()) throw InputError("pretraining corpus is empty");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw InputError("mask_rate must lie in (0, 1)");
  config.validate();
  model.validate();
  const std::size_t length = corpus.front().size();
  if (length < 2) throw InputError("pretraining sequences need at least one token after CLS");
  for (const auto& s : corpus) {
    if (s.size() != length) throw InputError("pretraining sequences must share one length");
  }

  auto working = std::make_shared<BaseParameters>(BaseParameters::initialize(model, config.seed, init_std));
  ParameterMap trainable;
  for (auto& [name, t] : working->tensors) {
    t.set_requires_grad(true);
    trainable.emplace(name, t);
  }
  ModelView view(working);

  const std::size_t total = config.epochs > 0 ? config.steps_for(corpus.size()) : config.total_steps;
  const LrSchedule schedule = config.schedule(total);
  Rng rng(derive_seed(config.seed, 0x3a5c));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_pos(1, length - 1);
  std::bernoulli_distribution mask(mask_rate);
  AdamState state;
  const ParameterMap frozen;

  PretrainResult result;
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t batch = std::min(config.batch_size, corpus.size());
    TokenBatch tokens;
    tokens.batch = batch;
    tokens.length = length;
    std::vector<std::size_t> masked_rows, targets;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& seq = corpus[pick(rng)];
      for (std::size_t p = 0; p < length; ++p) {
        TokenId id = seq[p];
        if (p > 0 && mask(rng)) {
          masked_rows.push_back(b * length + p);
          targets.push_back(id);
          id = kMaskToken;
        }
        tokens.ids.push_back(id);
      }
    }
    if (masked_rows.empty()) {
      const std::size_t p = pick_pos(rng);
      masked_rows.push_back(p);
      targets.push_back(tokens.ids[p]);
      tokens.ids[p] = kMaskToken;
    }
    for (auto& [name, t] : trainable) t.zero_grad();
    try {
      Tensor hidden = encoder_forward(tokens, view);
      Tensor loss = ops::softmax_cross_entropy(mlm_logits(hidden, masked_rows, view), targets);
      result.losses.push_back(loss.item());
      backward(loss);
      adam_step(trainable, frozen, state, config.adam, lr_at(step + 1, schedule));
    } catch (const NumericError& e) {
      throw NumericError("numeric failure at pretraining step " + std::to_string(step) + ": " + e.what());
    }
  }
  result.base = working->frozen_copy();
  return result;
}

}  // namespace adapterlab
