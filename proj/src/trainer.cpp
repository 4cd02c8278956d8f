#include "adapterlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <atomic>
#include <future>
#include <optional>
#include <numeric>
#include <sstream>

#include "adapterlab/errors.hpp"
#include "adapterlab/random.hpp"

namespace adapterlab {

void TrainConfig::validate() const {
  if (!(peak_lr > 0.0)) throw InputError("peak_lr must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw InputError("warmup_fraction must lie in (0, 1)");
  if (batch_size == 0) throw InputError("batch_size must be positive");
  if (epochs == 0 && total_steps == 0) throw InputError("either epochs or total_steps must be positive");
}

std::size_t TrainConfig::steps_per_epoch(std::size_t train_size) const {
  return (train_size + batch_size - 1) / batch_size;
}

std::size_t TrainConfig::steps_for(std::size_t train_size) const {
  return epochs > 0 ? epochs * steps_per_epoch(train_size) : total_steps;
}

LrSchedule TrainConfig::schedule(std::size_t total) const { return LrSchedule{peak_lr, total, warmup_fraction}; }

std::string history_csv(const std::vector<std::pair<std::string, MetricHistory>>& runs) {
  std::ostringstream os;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  os << "run_id,step,lr,train_loss,epoch,val_accuracy\n";
  for (const auto& [run_id, h] : runs) {
    std::size_t next_epoch = 0;
    for (const auto& s : h.steps) {
      os << run_id << ',' << s.step << ',' << num(s.lr) << ',' << num(s.train_loss) << ',' << s.epoch << ",\n";
      while (next_epoch < h.epochs.size() && h.epochs[next_epoch].step == s.step) {
        const auto& e = h.epochs[next_epoch++];
        os << run_id << ',' << e.step << ",,," << e.epoch << ',' << num(e.val_accuracy) << '\n';
      }
    }
    for (; next_epoch < h.epochs.size(); ++next_epoch) {
      const auto& e = h.epochs[next_epoch];
      os << run_id << ',' << e.step << ",,," << e.epoch << ',' << num(e.val_accuracy) << '\n';
    }
  }
  return os.str();
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

double accuracy_from_logits(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("accuracy: logits " + shape_to_string(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (argmax_row(logits.values().subspan(i * k, k)) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double evaluate(const ModelView& view, const std::vector<Example>& split, std::size_t batch_size) {
  if (split.empty()) throw InputError("evaluate: empty split");
  NoGradGuard no_grad;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    const std::size_t end = std::min(split.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor logits = classify(make_batch(split, idx), view);
    const auto labels = labels_of(split, idx);
    correct += static_cast<std::size_t>(std::llround(accuracy_from_logits(logits, labels) * static_cast<double>(idx.size())));
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

namespace {

ParameterMap clone_map(const ParameterMap& in, bool requires_grad) {
  ParameterMap out;
  for (const auto& [name, t] : in) out.emplace(name, t.clone(requires_grad));
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrainResult train_artifact(std::shared_ptr<const BaseParameters> base, const TaskArtifact& initial,
                           const SyntheticTask& task, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (task.train.empty() || task.validation.empty()) throw InputError("training needs nonempty train and validation splits");
  if (task.num_classes != initial.num_classes) {
    throw InputError("task has " + std::to_string(task.num_classes) + " classes, artifact head has " +
                     std::to_string(initial.num_classes));
  }

  ParameterMap trainable = clone_map(initial.parameters, true);
  ParameterMap frozen;
  for (const auto& [name, t] : base->tensors) {
    if (!trainable.contains(name)) frozen.emplace(name, t);
  }
  ModelView view(base, trainable, initial.adapter_nonlinearity());
  // The view holds handles to the same tensors as `trainable`.
  auto sync_view = [&] { view.mutable_task_parameters() = trainable; };

  const std::size_t n = task.train.size();
  const std::size_t per_epoch = config.steps_per_epoch(n);
  const std::size_t total = config.steps_for(n);
  const std::size_t num_epochs = (total + per_epoch - 1) / per_epoch;
  const LrSchedule schedule = config.schedule(total);

  Rng shuffle_rng(derive_seed(config.seed, 0x5eed));
  AdamState state = initial.optimizer_state.value_or(AdamState{});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_val_accuracy = -1.0;
  ParameterMap best_snapshot;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= num_epochs && step < total; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n && step < total; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      for (auto& [name, t] : trainable) t.zero_grad();
      double loss_value = 0.0;
      const double lr = lr_at(step + 1, schedule);
      try {
        Tensor loss = ops::softmax_cross_entropy(classify(make_batch(task.train, idx), view), labels_of(task.train, idx));
        loss_value = loss.item();
        backward(loss);
        adam_step(trainable, frozen, state, config.adam, lr);
      } catch (const NumericError& e) {
        throw NumericError("numeric failure at step " + std::to_string(step) + ": " + e.what());
      }
      result.history.steps.push_back({step, epoch, lr, loss_value});
      ++step;
    }
    if (hooks.after_epoch) {
      hooks.after_epoch(epoch, trainable);
      sync_view();
    }
    const double acc = evaluate(view, task.validation);
    result.history.epochs.push_back({epoch, step, acc});
    if (acc > result.best_val_accuracy) {
      result.best_val_accuracy = acc;
      result.best_epoch = epoch;
      best_snapshot = clone_map(trainable, false);
    }
  }

  TaskArtifact& art = result.artifact;
  art.task_id = initial.task_id;
  art.strategy = initial.strategy;
  art.num_classes = initial.num_classes;
  art.parameters = std::move(best_snapshot);
  art.metadata.seed = config.seed;
  art.metadata.hyperparameters = {
      {"peak_lr", format_double(config.peak_lr)},
      {"epochs", std::to_string(num_epochs)},
      {"total_steps", std::to_string(total)},
      {"batch_size", std::to_string(config.batch_size)},
      {"warmup_fraction", format_double(config.warmup_fraction)},
      {"task", task.name()},
      {"task_seed", std::to_string(task.spec.seed)},
  };
  art.metadata.metrics = {{"val_accuracy", result.best_val_accuracy},
                          {"best_epoch", static_cast<double>(result.best_epoch)}};
  if (hooks.keep_optimizer_state) art.optimizer_state = std::move(state);
  return result;
}

TrainResult train_task(TaskRegistry& registry, std::string_view task_id, const SyntheticTask& task,
                       const TrainConfig& config, const TrainHooks& hooks) {
  TaskArtifact initial = registry.artifact(task_id);
  TrainResult result = train_artifact(registry.base_ptr(), initial, task, config, hooks);
  registry.store(result.artifact);
  return result;
}

RerunResult rerun_best_of(std::shared_ptr<const BaseParameters> base, const SyntheticTask& task,
                          const RerunRequest& request) {
  if (request.runs == 0) throw InputError("rerun_best_of needs at least one run");
  struct Slot {
    RunOutcome outcome;
    std::optional<TrainResult> result;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(request.runs);

  auto run_one = [&](std::size_t i) {
    Slot& slot = slots[i];
    TrainConfig cfg = request.config;
    cfg.seed = request.config.seed + i;
    if (request.customize) request.customize(i, cfg);
    slot.outcome.seed = cfg.seed;
    try {
      TaskArtifact initial = make_task_artifact(*base, request.task_id, request.strategy, task.num_classes,
                                                derive_seed(cfg.seed, 0xa11ce));
      slot.result = train_artifact(base, initial, task, cfg);
      slot.outcome.val_accuracy = slot.result->best_val_accuracy;
    } catch (const NumericError& e) {
      slot.outcome.failed = true;
      slot.outcome.failure = e.what();
      slot.error = std::current_exception();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(request.workers, request.runs));
  if (workers == 1) {
    for (std::size_t i = 0; i < request.runs; ++i) run_one(i);
  } else {
    std::vector<std::future<void>> pending;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
      pending.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < request.runs; i = next++) run_one(i);
      }));
    }
    for (auto& f : pending) f.get();
  }

  RerunResult out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    out.runs.push_back(slots[i].outcome);
    if (slots[i].outcome.failed) continue;
    const auto& o = slots[i].outcome;
    if (!best || o.val_accuracy > slots[*best].outcome.val_accuracy ||
        (o.val_accuracy == slots[*best].outcome.val_accuracy && o.seed < slots[*best].outcome.seed)) {
      best = i;
    }
  }
  if (!best) std::rethrow_exception(slots.front().error);
  out.best_index = *best;
  out.best = std::move(*slots[*best].result);
  return out;
}

}  // namespace adapterlab
