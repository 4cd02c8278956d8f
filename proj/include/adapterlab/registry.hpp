#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adapterlab/optimizer.hpp"
#include "adapterlab/strategy.hpp"
#include "adapterlab/transformer.hpp"

namespace adapterlab {

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> hyperparameters;
  std::map<std::string, double> metrics;
};

/// A task's private parameters over the shared base. For adapter and
/// layer-norm tuning these are the adapters, norm copies and head; the
/// fine-tuning strategies hold full copies of the layers they train.
struct TaskArtifact {
  std::string task_id;
  TuningStrategy strategy = FullFineTune{};
  std::size_t num_classes = 2;
  ParameterMap parameters;
  TrainingMetadata metadata;
  std::optional<AdamState> optimizer_state;  // only kept when resuming

  std::size_t parameter_count() const;
  Nonlinearity adapter_nonlinearity() const;
};

/// Fresh, untrained artifact: head and adapters drawn from `seed`, trainable
/// base tensors deep-copied. The base is only read.
TaskArtifact make_task_artifact(const BaseParameters& base, std::string task_id, TuningStrategy strategy,
                                std::size_t num_classes, std::uint64_t seed, double head_init_std = 0.02);

ModelView compose(std::shared_ptr<const BaseParameters> base, const TaskArtifact& artifact);

void validate_task_id(std::string_view id);

/// Frozen base plus any number of independently trained tasks.
class TaskRegistry {
 public:
  explicit TaskRegistry(std::shared_ptr<const BaseParameters> base);

  const BaseParameters& base() const { return *base_; }
  const std::shared_ptr<const BaseParameters>& base_ptr() const { return base_; }

  const TaskArtifact& add_task(const std::string& task_id, TuningStrategy strategy, std::size_t num_classes,
                               std::uint64_t seed);
  // Replaces a registered task's artifact, e.g. with its trained snapshot.
  void store(TaskArtifact artifact);

  ModelView activate(std::string_view task_id) const;
  TaskArtifact artifact(std::string_view task_id) const;

  bool contains(std::string_view task_id) const;
  std::size_t size() const;
  std::vector<std::string> task_ids() const;

  // Base parameters plus every task's private parameters.
  std::size_t stored_parameter_count() const;

  // Layout: <dir>/base.ckpt, <dir>/tasks/<id>.ckpt, <dir>/tasks/<id>.meta
  void save(const std::filesystem::path& dir) const;
  static TaskRegistry load(const std::filesystem::path& dir);

 private:
  std::shared_ptr<const BaseParameters> base_;
  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
  std::map<std::string, TaskArtifact, std::less<>> tasks_;
};

}  // namespace adapterlab
