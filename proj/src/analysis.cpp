#include "adapterlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adapterlab/errors.hpp"

namespace adapterlab {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void AblationSpec::validate(std::size_t layers) const {
  if (first_layer > last_layer || last_layer >= layers) {
    throw RangeError("ablation span [" + std::to_string(first_layer) + ", " + std::to_string(last_layer) +
                     "] invalid for " + std::to_string(layers) + " layers");
  }
}

ModelView ablated_view(const ModelView& trained, const AblationSpec& spec) {
  spec.validate(trained.config().layers);
  const auto& task = trained.task_parameters();
  if (std::none_of(task.begin(), task.end(), [](const auto& kv) { return names::is_adapter(kv.first); })) {
    throw ContractError("ablation needs a model trained with adapters");
  }
  ParameterMap kept;
  for (const auto& [name, t] : task) {
    const auto layer = names::layer_of(name);
    const bool in_span = layer && *layer >= spec.first_layer && *layer <= spec.last_layer;
    if (in_span && names::is_adapter(name)) continue;
    if (spec.revert_layernorm && names::is_layer_norm(name)) {
      if (in_span) continue;
      if (!layer && names::is_embedding(name) && spec.first_layer == 0) continue;
    }
    kept.emplace(name, t);
  }
  return ModelView(trained.base_ptr(), std::move(kept), trained.adapter_nonlinearity());
}

double ablate_span(const ModelView& trained, const AblationSpec& spec, const std::vector<Example>& split) {
  const ModelView ablated = ablated_view(trained, spec);
  return evaluate(ablated, split) - evaluate(trained, split);
}

std::string AblationHeatmap::to_csv() const {
  std::string out = "first_layer,last_layer,delta_pp\n";
  for (std::size_t i = 0; i < layers; ++i) {
    for (std::size_t j = 0; j < layers; ++j) {
      out += std::to_string(i) + ',' + std::to_string(j) + ',' + format_double(100.0 * at(i, j)) + '\n';
    }
  }
  return out;
}

AblationHeatmap ablation_heatmap(const ModelView& trained, const std::vector<Example>& split, bool revert_layernorm) {
  const std::size_t L = trained.config().layers;
  AblationHeatmap map;
  map.layers = L;
  map.deltas.assign(L * L, 0.0);
  const double full = evaluate(trained, split);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = i; j < L; ++j) {
      map.deltas[i * L + j] = evaluate(ablated_view(trained, {i, j, revert_layernorm}), split) - full;
    }
  }
  return map;
}

SweepRow run_grid_point(const SweepSetup& setup, const TuningStrategy& strategy,
                        std::map<std::string, std::string> hyperparameters, const TrainConfig& config) {
  const ParameterPartition part = trainable_partition(strategy, setup.base->config, setup.task.num_classes);
  RerunRequest req;
  req.task_id = setup.task.name();
  req.strategy = strategy;
  req.runs = setup.runs;
  req.config = config;
  req.workers = setup.workers;
  RerunResult rr = rerun_best_of(setup.base, setup.task, req);

  SweepRow row;
  row.strategy = strategy_kind(strategy);
  hyperparameters.emplace("strategy", format_strategy(strategy));
  hyperparameters.emplace("peak_lr", format_double(config.peak_lr));
  row.hyperparameters = std::move(hyperparameters);
  row.trained_param_count = part.trainable_count;
  row.total_param_count = part.total_count();
  row.trained_fraction = part.trainable_fraction();
  row.metric = rr.best.best_val_accuracy;
  row.seed = rr.runs[rr.best_index].seed;
  return row;
}

namespace {

SweepReport new_report(const SweepSetup& setup, const std::string& sweep) {
  const auto& c = setup.base->config;
  SweepReport r;
  r.metadata = {{"format_version", std::to_string(kSweepReportVersion)},
                {"sweep", sweep},
                {"task", setup.task.name()},
                {"task_seed", std::to_string(setup.task.spec.seed)},
                {"layers", std::to_string(c.layers)},
                {"width", std::to_string(c.width)},
                {"heads", std::to_string(c.heads)},
                {"ffn_width", std::to_string(c.ffn_width)},
                {"vocab", std::to_string(c.vocab)},
                {"max_len", std::to_string(c.max_len)},
                {"runs", std::to_string(setup.runs)}};
  return r;
}

}  // namespace

SweepReport sweep_strategies(const SweepSetup& setup, const std::vector<TuningStrategy>& strategies) {
  if (strategies.empty()) throw InputError("sweep needs at least one strategy");
  SweepReport r = new_report(setup, "strategies");
  for (const auto& s : strategies) r.rows.push_back(run_grid_point(setup, s, {}, setup.config));
  r.sort_rows();
  return r;
}

SweepReport sweep_init_scale(const SweepSetup& setup, std::span<const double> sigmas) {
  if (sigmas.empty()) throw InputError("init-scale sweep needs a nonempty grid");
  SweepReport r = new_report(setup, "init");
  for (double sigma : sigmas) {
    AdapterConfig a = setup.adapter;
    a.init_std = sigma;
    r.rows.push_back(run_grid_point(setup, AdapterTuning{a}, {{"init_std", format_double(sigma)}}, setup.config));
  }
  r.sort_rows();
  return r;
}

SweepReport sweep_adapter_size(const SweepSetup& setup, std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw InputError("adapter-size sweep needs a nonempty grid");
  for (std::size_t m : sizes) {
    if (m > setup.base->config.width) {
      throw RangeError("adapter size " + std::to_string(m) + " exceeds model width " +
                       std::to_string(setup.base->config.width));
    }
  }
  SweepReport r = new_report(setup, "size");
  for (std::size_t m : sizes) {
    AdapterConfig a = setup.adapter;
    a.bottleneck = m;
    r.rows.push_back(run_grid_point(setup, AdapterTuning{a}, {{"adapter_size", std::to_string(m)}}, setup.config));
  }
  r.sort_rows();
  return r;
}

SweepReport sweep_top_k(const SweepSetup& setup, std::span<const std::size_t> top_layers) {
  if (top_layers.empty()) throw InputError("top-k sweep needs a nonempty grid");
  SweepReport r = new_report(setup, "topk");
  for (std::size_t k : top_layers) {
    r.rows.push_back(run_grid_point(setup, VariableFineTune{k}, {{"top_layers", std::to_string(k)}}, setup.config));
  }
  r.sort_rows();
  return r;
}

SweepReport sweep_learning_rate(const SweepSetup& setup, const TuningStrategy& strategy, std::span<const double> lrs) {
  if (lrs.empty()) throw InputError("learning-rate sweep needs a nonempty grid");
  SweepReport r = new_report(setup, "lr");
  for (double lr : lrs) {
    TrainConfig cfg = setup.config;
    cfg.peak_lr = lr;
    r.rows.push_back(run_grid_point(setup, strategy, {}, cfg));
  }
  r.sort_rows();
  return r;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile of an empty set");
  if (!(p >= 0.0 && p <= 1.0)) throw RangeError("percentile must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<PercentileBand> normalize_and_percentiles(const std::vector<ScoreRecord>& scores,
                                                      const std::map<std::string, double>& full_finetune_scores) {
  std::map<std::pair<std::string, double>, std::vector<double>> groups;
  for (const auto& s : scores) {
    auto ref = full_finetune_scores.find(s.task);
    if (ref == full_finetune_scores.end()) {
      throw InputError("no full fine-tuning reference score for task '" + s.task + "'");
    }
    groups[{s.method, s.budget}].push_back(s.score - ref->second);
  }
  std::vector<PercentileBand> bands;
  for (auto& [key, values] : groups) {
    PercentileBand b;
    b.method = key.first;
    b.budget = key.second;
    b.count = values.size();
    b.p20 = percentile(values, 0.2);
    b.p50 = percentile(values, 0.5);
    b.p80 = percentile(values, 0.8);
    bands.push_back(std::move(b));
  }
  return bands;
}

double param_budget_from_fraction(std::size_t n_tasks, double trained_fraction) {
  return 1.0 + static_cast<double>(n_tasks) * trained_fraction;
}

double param_budget(std::size_t n_tasks, const TuningStrategy& strategy, const ModelConfig& config,
                    std::size_t num_classes) {
  if (std::holds_alternative<FullFineTune>(strategy)) {
    return n_tasks == 0 ? 1.0 : static_cast<double>(n_tasks);
  }
  const ParameterPartition part = trainable_partition(strategy, config, num_classes);
  return param_budget_from_fraction(n_tasks, part.trainable_fraction());
}

}  // namespace adapterlab
