#include <gtest/gtest.h>

#include <random>

#include "adapterlab/analysis.hpp"
#include "adapterlab/errors.hpp"
#include "percentile_oracle.hpp"
#include "test_support.hpp"

namespace adapterlab {
namespace {

using testing::bit_equal;
using testing::tiny_base;
using testing::tiny_config;

SyntheticTask small_task(TaskKind kind, std::uint64_t seed) {
  SyntheticTaskSpec spec;
  spec.kind = kind;
  spec.vocab = tiny_config().vocab;
  spec.content_length = 6;
  spec.train_size = 96;
  spec.validation_size = 48;
  spec.test_size = 48;
  spec.seed = seed;
  return generate_task(spec);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.peak_lr = 1e-2;
  c.batch_size = 16;
  return c;
}

// Adapter artifact with perturbed norms so that reverting them matters.
TaskArtifact perturbed_adapter_artifact(const BaseParameters& base) {
  TaskArtifact art = make_task_artifact(base, "t", AdapterTuning{AdapterConfig{4, 0.3}}, 2, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& [name, t] : art.parameters)
    if (names::is_layer_norm(name))
      for (double& v : t.mutable_values()) v += n(rng);
  return art;
}

TEST(AblationTest, SpanValidation) {
  EXPECT_NO_THROW((AblationSpec{0, 1}.validate(2)));
  EXPECT_THROW((AblationSpec{1, 0}.validate(2)), RangeError);
  EXPECT_THROW((AblationSpec{0, 2}.validate(2)), RangeError);
}

TEST(AblationTest, RequiresAdapters) {
  auto base = tiny_base();
  TaskArtifact art = make_task_artifact(*base, "t", LayerNormOnly{}, 2, 1);
  EXPECT_THROW(ablated_view(compose(base, art), {0, 1}), ContractError);
}

TEST(AblationTest, FullSpanWithRevertIsBasePlusHead) {
  auto base = tiny_base();
  TaskArtifact art = perturbed_adapter_artifact(*base);
  const ModelView trained = compose(base, art);
  ParameterMap head_only;
  for (const auto& [name, t] : art.parameters)
    if (names::is_head(name)) head_only.emplace(name, t);
  const ModelView reference(base, head_only);
  const auto batch = make_batch(small_task(TaskKind::kParity, 1).test);
  const Tensor expected = classify(batch, reference);
  const Tensor ablated = classify(batch, ablated_view(trained, {0, 1, true}));
  for (std::size_t i = 0; i < expected.numel(); ++i) EXPECT_NEAR(ablated.at(i), expected.at(i), 1e-9);
  // Without reversion the perturbed norms stay and the logits differ.
  EXPECT_FALSE(bit_equal(expected, classify(batch, ablated_view(trained, {0, 1, false}))));
}

TEST(AblationTest, PartialSpanKeepsOtherAdapters) {
  auto base = tiny_base();
  const ModelView trained = compose(base, perturbed_adapter_artifact(*base));
  const ModelView ablated = ablated_view(trained, {1, 1, true});
  EXPECT_TRUE(find_adapter(ablated, 0, AdapterSite::kAttention).has_value());
  EXPECT_FALSE(find_adapter(ablated, 1, AdapterSite::kFeedForward).has_value());
  EXPECT_TRUE(ablated.task_parameters().contains("embed.ln.gamma"));
  EXPECT_FALSE(ablated.task_parameters().contains("layer.1.ln_ffn.gamma"));
  EXPECT_TRUE(ablated.task_parameters().contains("layer.0.ln_ffn.gamma"));
}

TEST(AblationTest, IdentityAdaptersAblateToZeroDelta) {
  auto base = tiny_base();
  TaskArtifact art = make_task_artifact(*base, "t", AdapterTuning{AdapterConfig{4, 0.0}}, 2, 1);
  const auto task = small_task(TaskKind::kMajority, 2);
  EXPECT_EQ(ablate_span(compose(base, art), {0, 1}, task.validation), 0.0);
}

TEST(AblationTest, HeatmapLayout) {
  auto base = tiny_base();
  const auto task = small_task(TaskKind::kMajority, 3);
  const ModelView trained = compose(base, perturbed_adapter_artifact(*base));
  const AblationHeatmap map = ablation_heatmap(trained, task.validation, true);
  ASSERT_EQ(map.layers, 2u);
  EXPECT_EQ(map.at(1, 0), 0.0);
  EXPECT_EQ(map.at(0, 1), ablate_span(trained, {0, 1, true}, task.validation));
  const std::string csv = map.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "first_layer,last_layer,delta_pp");
}

TEST(PercentileTest, Examples) {
  EXPECT_NEAR(percentile({-2.0, 0.0, 2.0}, 0.2), -1.2, 1e-15);
  EXPECT_EQ(percentile({2.0, -2.0, 0.0}, 0.5), 0.0);
  EXPECT_NEAR(percentile({-2.0, 0.0, 2.0}, 0.8), 1.2, 1e-15);
  EXPECT_EQ(percentile({3.5}, 0.2), 3.5);
  EXPECT_THROW(percentile({}, 0.5), InputError);
  EXPECT_THROW(percentile({1.0}, 1.5), RangeError);
}

TEST(PercentileTest, NormalizesAgainstFullFineTuning) {
  const std::vector<ScoreRecord> scores{{"adapter", 0.02, "a", 80.0}, {"adapter", 0.02, "b", 70.0},
                                        {"adapter", 0.02, "c", 92.0}};
  const auto bands = normalize_and_percentiles(scores, {{"a", 82.0}, {"b", 70.0}, {"c", 90.0}});
  ASSERT_EQ(bands.size(), 1u);
  EXPECT_EQ(bands[0].count, 3u);
  EXPECT_NEAR(bands[0].p20, -1.2, 1e-12);
  EXPECT_NEAR(bands[0].p50, 0.0, 1e-12);
  EXPECT_NEAR(bands[0].p80, 1.2, 1e-12);
  EXPECT_THROW(normalize_and_percentiles(scores, {{"a", 82.0}}), InputError);
}

TEST(PercentileTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [scores, reference] = testing::random_scores(rng);
    EXPECT_TRUE(testing::bands_identical(normalize_and_percentiles(scores, reference),
                                         testing::oracle_bands(scores, reference)))
        << trial;
  }
}

TEST(PercentileTest, BandsCsv) {
  const std::string csv = bands_csv({{"adapter", 0.5, 3, -1.2, 0.0, 1.2}});
  EXPECT_EQ(csv, "method,budget,count,p20,p50,p80\nadapter,0.5,3,-1.2,0,1.2\n");
}

TEST(BudgetTest, Examples) {
  const ModelConfig c = tiny_config();
  EXPECT_EQ(param_budget(9, FullFineTune{}, c), 9.0);
  EXPECT_EQ(param_budget(0, FullFineTune{}, c), 1.0);
  EXPECT_NEAR(param_budget_from_fraction(9, 0.036), 1.324, 1e-12);
  EXPECT_NEAR(param_budget_from_fraction(17, 0.0114), 1.1938, 1e-12);
  EXPECT_EQ(param_budget_from_fraction(0, 0.5), 1.0);
  const auto part = trainable_partition(LayerNormOnly{}, c, 2);
  EXPECT_DOUBLE_EQ(param_budget(4, LayerNormOnly{}, c), 1.0 + 4 * part.trainable_fraction());
}

TEST(BudgetTest, IncrementPerTaskIsTrainedFraction) {
  const ModelConfig c = tiny_config();
  const TuningStrategy s = AdapterTuning{AdapterConfig{4}};
  const double rho = trainable_partition(s, c, 2).trainable_fraction();
  for (std::size_t n = 1; n < 20; ++n)
    EXPECT_NEAR(param_budget(n, s, c) - param_budget(n - 1, s, c), rho, 1e-12);
}

TEST(AblationTest, HeatmapEntriesRecomputeExactly) {
  auto base = tiny_base();
  const auto task = small_task(TaskKind::kParity, 4);
  const ModelView trained = compose(base, perturbed_adapter_artifact(*base));
  const AblationHeatmap map = ablation_heatmap(trained, task.validation);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = i; j < 2; ++j) EXPECT_EQ(map.at(i, j), ablate_span(trained, {i, j}, task.validation));
}

TEST(SweepTest, TopAllMatchesFullFineTuning) {
  SweepSetup setup{tiny_base(), small_task(TaskKind::kMajority, 5), quick_config(), 1, AdapterConfig{4}, 1};
  const std::vector<std::size_t> ks{1, 2};
  const SweepReport topk = sweep_top_k(setup, ks);
  ASSERT_EQ(topk.rows.size(), 2u);
  const SweepReport full = sweep_strategies(setup, {FullFineTune{}});
  const SweepRow& all = topk.rows.back();
  EXPECT_EQ(all.hyperparameters.at("top_layers"), "2");
  EXPECT_EQ(all.trained_param_count, full.rows[0].trained_param_count);
  EXPECT_EQ(all.metric, full.rows[0].metric);
  EXPECT_EQ(full.rows[0].trained_fraction, 1.0);
  EXPECT_LT(topk.rows.front().trained_param_count, all.trained_param_count);
}

TEST(SweepTest, RowCountsAndCsv) {
  SweepSetup setup{tiny_base(), small_task(TaskKind::kParity, 6), quick_config(), 2, AdapterConfig{4}, 1};
  const SweepReport sizes = sweep_adapter_size(setup, grids::kDeskAdapterSize);
  ASSERT_EQ(sizes.rows.size(), grids::kDeskAdapterSize.size());
  for (std::size_t i = 1; i < sizes.rows.size(); ++i)
    EXPECT_LT(sizes.rows[i - 1].trained_param_count, sizes.rows[i].trained_param_count);
  const SweepReport init = sweep_init_scale(setup, grids::kDeskInitStd);
  EXPECT_EQ(init.rows.size(), grids::kDeskInitStd.size());
  const std::string csv = init.to_csv();
  EXPECT_EQ(csv.rfind("# ", 0), 0u);
  EXPECT_NE(csv.find("# format_version=1\n"), std::string::npos);
  EXPECT_NE(csv.find("# sweep=init\n"), std::string::npos);
  EXPECT_NE(csv.find("\nstrategy,hyperparameters,trained_param_count,total_param_count,trained_fraction,metric,seed\n"),
            std::string::npos);
  const std::vector<double> lrs{1e-3, 1e-2};
  EXPECT_EQ(sweep_learning_rate(setup, LayerNormOnly{}, lrs).rows.size(), 2u);
  const std::vector<std::size_t> too_big{17};
  EXPECT_THROW(sweep_adapter_size(setup, too_big), RangeError);
}

TEST(SweepTest, SortRowsByStrategyThenCount) {
  SweepReport r;
  r.rows = {{"top_k", {}, 50}, {"adapter", {}, 30}, {"top_k", {}, 10}, {"adapter", {}, 20}};
  r.sort_rows();
  EXPECT_EQ(r.rows[0].trained_param_count, 20u);
  EXPECT_EQ(r.rows[1].trained_param_count, 30u);
  EXPECT_EQ(r.rows[2].trained_param_count, 10u);
  EXPECT_EQ(r.rows[3].strategy, "top_k");
}

}  // namespace
}  // namespace adapterlab
