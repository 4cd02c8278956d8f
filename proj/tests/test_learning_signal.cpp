// Slow: pretrains the desk-scale encoder, then checks that adapters learn
// parity well above the majority-class rate.

#include <gtest/gtest.h>

#include <iostream>

#include "adapterlab/analysis.hpp"
#include "adapterlab/trainer.hpp"

namespace adapterlab {
namespace {

std::shared_ptr<const BaseParameters> pretrained() {
  const ModelConfig mc{.layers = 2, .width = 32, .heads = 2, .ffn_width = 64, .vocab = 12, .max_len = 16};
  TrainConfig pc;
  pc.epochs = 0;
  pc.total_steps = 2000;
  pc.seed = 3;
  return std::make_shared<const BaseParameters>(mlm_pretrain(generate_corpus(mc.vocab, 7, 4000, 7), mc, pc).base);
}

TEST(LearningSignalTest, AdaptersBeatMajorityOnParity) {
  auto base = pretrained();
  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kParity;
  spec.vocab = base->config.vocab;
  spec.seed = 11;
  const auto task = generate_task(spec);
  TrainConfig config;
  config.peak_lr = 1e-2;
  config.epochs = 40;
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    config.seed = seed;
    TaskArtifact art = make_task_artifact(*base, "parity", AdapterTuning{AdapterConfig{4}}, 2, derive_seed(seed, 0xa11ce));
    const auto r = train_artifact(base, art, task, config);
    mean += r.best_val_accuracy / 3.0;
    if (seed == 0) {
      // Recorded for inspection; span-monotonicity is a tendency, not a theorem.
      const auto map = ablation_heatmap(compose(base, r.artifact), task.validation);
      std::cout << "ablation heatmap (seed 0):\n" << map.to_csv();
    }
  }
  const double majority = majority_fraction(task.validation, task.num_classes);
  EXPECT_GE(mean - majority, 0.20) << "mean " << mean << " majority " << majority;
}

}  // namespace
}  // namespace adapterlab
