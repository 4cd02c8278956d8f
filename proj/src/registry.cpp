#include "adapterlab/registry.hpp"

#include <fstream>

#include "adapterlab/checkpoint.hpp"
#include "adapterlab/errors.hpp"
#include "adapterlab/random.hpp"

namespace adapterlab {

std::size_t TaskArtifact::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters) n += t.numel();
  return n;
}

Nonlinearity TaskArtifact::adapter_nonlinearity() const {
  if (const auto* a = std::get_if<AdapterTuning>(&strategy)) return a->adapter.nonlinearity;
  return Nonlinearity::kRelu;
}

void validate_task_id(std::string_view id) {
  if (id.empty()) throw InputError("task id must not be empty");
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    if (!ok) throw InputError("task id '" + std::string(id) + "' may only use letters, digits, '_', '-' and '.'");
  }
}

TaskArtifact make_task_artifact(const BaseParameters& base, std::string task_id, TuningStrategy strategy,
                                std::size_t num_classes, std::uint64_t seed, double head_init_std) {
  validate_task_id(task_id);
  validate_strategy(strategy, base.config);
  TaskArtifact art;
  art.task_id = std::move(task_id);
  art.strategy = strategy;
  art.num_classes = num_classes;
  art.metadata.seed = seed;

  Rng rng(seed);
  const std::size_t d = base.config.width;
  std::vector<double> head(d * num_classes);
  for (double& v : head) v = sample_truncated_normal(rng, head_init_std);
  art.parameters.emplace(names::kHeadWeight, Tensor({d, num_classes}, std::move(head)));
  art.parameters.emplace(names::kHeadBias, Tensor::zeros({num_classes}));

  if (const auto* a = std::get_if<AdapterTuning>(&strategy)) {
    store_adapters(art.parameters, attach_adapters(base, a->adapter, rng), false);
  }
  for (const auto& [name, shape] : encoder_parameter_shapes(base.config, false)) {
    if (is_trainable(name, strategy, base.config)) art.parameters.emplace(name, base.get(name).clone(false));
  }
  return art;
}

ModelView compose(std::shared_ptr<const BaseParameters> base, const TaskArtifact& artifact) {
  return ModelView(std::move(base), artifact.parameters, artifact.adapter_nonlinearity());
}

TaskRegistry::TaskRegistry(std::shared_ptr<const BaseParameters> base) : base_(std::move(base)) {
  if (!base_) throw ContractError("registry needs base parameters");
}

const TaskArtifact& TaskRegistry::add_task(const std::string& task_id, TuningStrategy strategy,
                                           std::size_t num_classes, std::uint64_t seed) {
  std::lock_guard lock(*mutex_);
  if (tasks_.contains(task_id)) throw ConflictError("task '" + task_id + "' already registered");
  auto art = make_task_artifact(*base_, task_id, std::move(strategy), num_classes, seed);
  return tasks_.emplace(task_id, std::move(art)).first->second;
}

void TaskRegistry::store(TaskArtifact artifact) {
  std::lock_guard lock(*mutex_);
  auto it = tasks_.find(artifact.task_id);
  if (it == tasks_.end()) throw NotFoundError("task '" + artifact.task_id + "' is not registered");
  it->second = std::move(artifact);
}

ModelView TaskRegistry::activate(std::string_view task_id) const {
  std::lock_guard lock(*mutex_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw NotFoundError("task '" + std::string(task_id) + "' is not registered");
  return compose(base_, it->second);
}

TaskArtifact TaskRegistry::artifact(std::string_view task_id) const {
  std::lock_guard lock(*mutex_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw NotFoundError("task '" + std::string(task_id) + "' is not registered");
  return it->second;
}

bool TaskRegistry::contains(std::string_view task_id) const {
  std::lock_guard lock(*mutex_);
  return tasks_.find(task_id) != tasks_.end();
}

std::size_t TaskRegistry::size() const {
  std::lock_guard lock(*mutex_);
  return tasks_.size();
}

std::vector<std::string> TaskRegistry::task_ids() const {
  std::lock_guard lock(*mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, art] : tasks_) ids.push_back(id);
  return ids;
}

std::size_t TaskRegistry::stored_parameter_count() const {
  std::lock_guard lock(*mutex_);
  std::size_t n = base_->parameter_count();
  for (const auto& [id, art] : tasks_) n += art.parameter_count();
  return n;
}

void TaskRegistry::save(const std::filesystem::path& dir) const {
  std::lock_guard lock(*mutex_);
  std::filesystem::create_directories(dir / "tasks");
  save_base_checkpoint(*base_, dir / "base.ckpt");
  for (const auto& [id, art] : tasks_) {
    save_task_checkpoint(art, base_->config, dir / "tasks" / (id + ".ckpt"));
    write_task_meta(art, dir / "tasks" / (id + ".meta"));
  }
}

TaskRegistry TaskRegistry::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "base.ckpt")) {
    throw LoadError("registry '" + dir.string() + "' has no base.ckpt");
  }
  auto base = std::make_shared<const BaseParameters>(load_base_checkpoint(dir / "base.ckpt"));
  TaskRegistry reg(base);
  const auto tasks_dir = dir / "tasks";
  if (std::filesystem::exists(tasks_dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(tasks_dir)) {
      if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      TaskArtifact art = load_task_checkpoint(f, base->config);
      reg.tasks_.emplace(art.task_id, std::move(art));
    }
  }
  return reg;
}

}  // namespace adapterlab
