#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adapterlab/optimizer.hpp"
#include "adapterlab/registry.hpp"
#include "adapterlab/schedule.hpp"
#include "adapterlab/tasks.hpp"

namespace adapterlab {

struct TrainConfig {
  double peak_lr = 1e-3;
  // Task training runs epochs * ceil(train_size / batch_size) steps. When
  // epochs is 0, total_steps is used directly (pretraining always does).
  std::size_t epochs = 10;
  std::size_t total_steps = 0;
  double warmup_fraction = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
  std::size_t steps_per_epoch(std::size_t train_size) const;
  std::size_t steps_for(std::size_t train_size) const;
  LrSchedule schedule(std::size_t total) const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // steps completed at the end of the epoch
  double val_accuracy = 0.0;
};

struct MetricHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// CSV with header run_id,step,lr,train_loss,epoch,val_accuracy. Step rows
/// leave val_accuracy empty; each epoch adds a row with an empty lr and loss.
std::string history_csv(const std::vector<std::pair<std::string, MetricHistory>>& runs);

struct TrainResult {
  TaskArtifact artifact;  // snapshot at the best validation epoch
  MetricHistory history;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

struct TrainHooks {
  // Runs after each epoch's last update, before validation. May edit the
  // working parameters.
  std::function<void(std::size_t epoch, ParameterMap& trainable)> after_epoch;
  bool keep_optimizer_state = false;
};

/// Fraction of argmax-correct rows. Ties go to the lowest class index.
double accuracy_from_logits(const Tensor& logits, std::span<const std::size_t> labels);
std::size_t argmax_row(std::span<const double> row);

double evaluate(const ModelView& view, const std::vector<Example>& split, std::size_t batch_size = 256);

/// Trains `initial` on `task.train`, selecting the epoch with the best
/// validation accuracy. Only the artifact's own tensors change.
TrainResult train_artifact(std::shared_ptr<const BaseParameters> base, const TaskArtifact& initial,
                           const SyntheticTask& task, const TrainConfig& config, const TrainHooks& hooks = {});

/// Trains a registered task and stores the best snapshot back in the registry.
TrainResult train_task(TaskRegistry& registry, std::string_view task_id, const SyntheticTask& task,
                       const TrainConfig& config, const TrainHooks& hooks = {});

struct RunOutcome {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  double val_accuracy = 0.0;
};

struct RerunResult {
  TrainResult best;
  std::size_t best_index = 0;
  std::vector<RunOutcome> runs;
};

struct RerunRequest {
  std::string task_id;
  TuningStrategy strategy = FullFineTune{};
  std::size_t runs = 1;
  TrainConfig config;  // run i uses seed config.seed + i
  // Optional per-run override of the training config.
  std::function<void(std::size_t run, TrainConfig&)> customize;
  std::size_t workers = 1;
};

/// k independent runs with distinct seeds; returns the best by validation
/// accuracy, ties to the lowest seed. Runs that fail numerically are
/// excluded; if every run fails the first failure is rethrown.
RerunResult rerun_best_of(std::shared_ptr<const BaseParameters> base, const SyntheticTask& task,
                          const RerunRequest& request);

struct PretrainResult {
  BaseParameters base;  // frozen copy
  std::vector<double> losses;
};

/// Masked-token pretraining of a freshly initialized encoder. Each non-CLS
/// position is replaced by MASK with probability mask_rate.
PretrainResult mlm_pretrain(const std::vector<std::vector<TokenId>>& corpus, const ModelConfig& model,
                            const TrainConfig& config, double mask_rate = 0.15, double init_std = 0.02);

}  // namespace adapterlab
