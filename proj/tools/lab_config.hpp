#pragma once

#include <filesystem>

#include "adapterlab/adapter.hpp"
#include "adapterlab/tasks.hpp"
#include "adapterlab/trainer.hpp"

namespace adapterlab::cli {

struct PretrainSettings {
  std::size_t corpus_size = 4000;
  std::size_t content_length = 7;
  std::size_t steps = 2000;
  double peak_lr = 1e-3;
  std::size_t batch_size = 32;
  double mask_rate = 0.15;
  double init_std = 0.02;
};

// Everything a run can be configured with. Defaults give the desk-scale
// setup; a JSON file overrides any subset, section by section.
struct LabConfig {
  ModelConfig model{.layers = 2, .width = 32, .heads = 2, .ffn_width = 64, .vocab = 12, .max_len = 16};
  AdapterConfig adapter{4, 1e-2, Nonlinearity::kRelu};
  TrainConfig train;
  PretrainSettings pretrain;
  SyntheticTaskSpec task;
  std::size_t workers = 1;

  LabConfig();
};

// Unknown sections or keys and wrongly typed values are InputErrors.
LabConfig load_config(const std::filesystem::path& path);
LabConfig parse_config(std::string_view json_text);

}  // namespace adapterlab::cli
