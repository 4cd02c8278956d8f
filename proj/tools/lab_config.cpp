#include "lab_config.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "adapterlab/errors.hpp"
#include "json.hpp"

namespace adapterlab::cli {

using nlohmann::json;

LabConfig::LabConfig() {
  task.content_length = 7;
  task.train_size = 512;
  task.validation_size = 256;
  task.test_size = 256;
  task.seed = 11;
}

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InputError("config section '" + name_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& into) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) throw InputError("expected a non-negative integer");
      }
      into = it->get<T>();
    } catch (const std::exception& e) {
      throw InputError("config field '" + name_ + "." + key + "': " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw InputError("config field '" + name_ + "." + key + "' is not recognised");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

}  // namespace

LabConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw InputError("config must be a JSON object");

  LabConfig c;
  for (const auto& [name, value] : root.items()) {
    if (name == "model") {
      Section s(value, name);
      s.read("layers", c.model.layers);
      s.read("width", c.model.width);
      s.read("heads", c.model.heads);
      s.read("ffn_width", c.model.ffn_width);
      s.read("vocab", c.model.vocab);
      s.read("max_len", c.model.max_len);
      s.read("layer_norm_eps", c.model.layer_norm_eps);
      s.finish();
    } else if (name == "adapter") {
      Section s(value, name);
      std::string act(to_string(c.adapter.nonlinearity));
      s.read("bottleneck", c.adapter.bottleneck);
      s.read("init_std", c.adapter.init_std);
      s.read("nonlinearity", act);
      s.finish();
      c.adapter.nonlinearity = parse_nonlinearity(act);
    } else if (name == "train") {
      Section s(value, name);
      s.read("peak_lr", c.train.peak_lr);
      s.read("epochs", c.train.epochs);
      s.read("total_steps", c.train.total_steps);
      s.read("warmup_fraction", c.train.warmup_fraction);
      s.read("batch_size", c.train.batch_size);
      s.read("beta1", c.train.adam.beta1);
      s.read("beta2", c.train.adam.beta2);
      s.read("adam_eps", c.train.adam.eps);
      s.read("workers", c.workers);
      s.finish();
    } else if (name == "pretrain") {
      Section s(value, name);
      s.read("corpus_size", c.pretrain.corpus_size);
      s.read("content_length", c.pretrain.content_length);
      s.read("steps", c.pretrain.steps);
      s.read("peak_lr", c.pretrain.peak_lr);
      s.read("batch_size", c.pretrain.batch_size);
      s.read("mask_rate", c.pretrain.mask_rate);
      s.read("init_std", c.pretrain.init_std);
      s.finish();
    } else if (name == "task") {
      Section s(value, name);
      std::string kind = std::string(to_string(c.task.kind));
      s.read("kind", kind);
      s.read("content_length", c.task.content_length);
      s.read("train_size", c.task.train_size);
      s.read("validation_size", c.task.validation_size);
      s.read("test_size", c.task.test_size);
      s.read("seed", c.task.seed);
      s.finish();
      c.task.kind = parse_task_kind(kind);
    } else {
      throw InputError("config section '" + name + "' is not recognised");
    }
  }
  c.model.validate();
  c.train.validate();
  if (c.adapter.validate(c.model.width)) {
    std::cerr << "warning: adapter bottleneck equals the model width; adapters are meant to be narrow\n";
  }
  return c;
}

LabConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace adapterlab::cli
