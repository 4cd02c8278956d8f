#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adapterlab/strategy.hpp"
#include "adapterlab/tasks.hpp"
#include "adapterlab/trainer.hpp"

namespace adapterlab {

// ---- Adapter ablation ------------------------------------------------------

struct AblationSpec {
  std::size_t first_layer = 0;
  std::size_t last_layer = 0;  // inclusive
  // Also restore the span's layer norms to their pretrained values. A span
  // starting at layer 0 then restores the embedding norm as well.
  bool revert_layernorm = false;

  void validate(std::size_t layers) const;
};

/// The trained view with adapters in the span removed (exact identity).
/// Nothing is retrained.
ModelView ablated_view(const ModelView& trained, const AblationSpec& spec);

/// accuracy(ablated) - accuracy(trained), as a fraction in [-1, 1].
double ablate_span(const ModelView& trained, const AblationSpec& spec, const std::vector<Example>& split);

struct AblationHeatmap {
  std::size_t layers = 0;
  std::vector<double> deltas;  // row-major L x L, lower triangle is 0

  double at(std::size_t first, std::size_t last) const { return deltas[first * layers + last]; }
  // Rows first_layer,last_layer,delta_pp where delta_pp is in percentage points.
  std::string to_csv() const;
};

AblationHeatmap ablation_heatmap(const ModelView& trained, const std::vector<Example>& split,
                                 bool revert_layernorm = false);

// ---- Sweeps ------------------------------------------------------------------

struct SweepRow {
  std::string strategy;
  std::map<std::string, std::string> hyperparameters;
  std::size_t trained_param_count = 0;
  std::size_t total_param_count = 0;
  double trained_fraction = 0.0;
  double metric = 0.0;  // validation accuracy of the selected run
  std::uint64_t seed = 0;
};

inline constexpr int kSweepReportVersion = 1;

struct SweepReport {
  std::map<std::string, std::string> metadata;
  std::vector<SweepRow> rows;

  // Sorts rows by (strategy, trained_param_count), stable for equal keys.
  void sort_rows();
  std::string to_csv() const;
};

struct SweepSetup {
  std::shared_ptr<const BaseParameters> base;
  SyntheticTask task;
  TrainConfig config;
  std::size_t runs = 1;
  AdapterConfig adapter;
  std::size_t workers = 1;
};

namespace grids {
inline const std::vector<double> kDeskInitStd{1e-7, 1e-2, 1.0};
inline const std::vector<double> kWideInitStd{1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
inline const std::vector<std::size_t> kDeskAdapterSize{2, 4, 8};
inline const std::vector<std::size_t> kWideAdapterSize{8, 64, 256};
inline const std::vector<std::size_t> kWideTopK{1, 2, 3, 5, 7, 9, 11, 12};
inline const std::vector<double> kDeskLearningRate{1e-4, 1e-3, 3e-3};
inline const std::vector<double> kWideLearningRate{2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3};
}  // namespace grids

/// One best-of-k training for `strategy`, reported as a row.
SweepRow run_grid_point(const SweepSetup& setup, const TuningStrategy& strategy,
                        std::map<std::string, std::string> hyperparameters, const TrainConfig& config);

SweepReport sweep_strategies(const SweepSetup& setup, const std::vector<TuningStrategy>& strategies);
SweepReport sweep_init_scale(const SweepSetup& setup, std::span<const double> sigmas);
SweepReport sweep_adapter_size(const SweepSetup& setup, std::span<const std::size_t> sizes);
SweepReport sweep_top_k(const SweepSetup& setup, std::span<const std::size_t> top_layers);
SweepReport sweep_learning_rate(const SweepSetup& setup, const TuningStrategy& strategy, std::span<const double> lrs);

// ---- Trade-off aggregation -----------------------------------------------------

struct ScoreRecord {
  std::string method;
  double budget = 0.0;  // e.g. trained fraction
  std::string task;
  double score = 0.0;
};

struct PercentileBand {
  std::string method;
  double budget = 0.0;
  std::size_t count = 0;
  double p20 = 0.0;
  double p50 = 0.0;
  double p80 = 0.0;
};

/// Linear interpolation between closest ranks: rank = p * (n - 1).
double percentile(std::vector<double> values, double p);

/// Subtracts each task's full fine-tuning score, then reports the 20th, 50th
/// and 80th percentiles per (method, budget), ordered by method then budget.
std::vector<PercentileBand> normalize_and_percentiles(const std::vector<ScoreRecord>& scores,
                                                      const std::map<std::string, double>& full_finetune_scores);

std::string bands_csv(const std::vector<PercentileBand>& bands);

// ---- Parameter budget ------------------------------------------------------------

/// Total stored parameters for n tasks relative to one base model.
double param_budget(std::size_t n_tasks, const TuningStrategy& strategy, const ModelConfig& config,
                    std::size_t num_classes = 2);
double param_budget_from_fraction(std::size_t n_tasks, double trained_fraction);

}  // namespace adapterlab
