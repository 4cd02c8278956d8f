#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "adapterlab/checkpoint.hpp"
#include "adapterlab/errors.hpp"
#include "adapterlab/registry.hpp"
#include "adapterlab/trainer.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace adapterlab {
namespace {

namespace fs = std::filesystem;
using testing::bit_equal;
using testing::tiny_base;
using testing::tiny_config;

ModelConfig base_geometry() {
  ModelConfig c;
  c.layers = 12;
  c.width = 768;
  c.heads = 12;
  c.ffn_width = 3072;
  c.vocab = 30522;
  c.max_len = 512;
  return c;
}

const AdapterConfig kAdapter{4, 1e-2, Nonlinearity::kRelu};

TEST(StrategyTest, FormatParseRoundTrip) {
  for (const TuningStrategy& s : std::vector<TuningStrategy>{
           FullFineTune{}, VariableFineTune{3}, LayerNormOnly{},
           AdapterTuning{AdapterConfig{8, 1e-2, Nonlinearity::kGelu}}}) {
    EXPECT_EQ(parse_strategy(format_strategy(s)), s) << format_strategy(s);
  }
  EXPECT_EQ(parse_strategy("adapter:16"), TuningStrategy(AdapterTuning{AdapterConfig{16}}));
  EXPECT_THROW(parse_strategy("bogus"), InputError);
  EXPECT_THROW(parse_strategy("top:x"), InputError);
}

TEST(PartitionTest, DisjointAndCoversTaskModel) {
  const ModelConfig c = tiny_config();
  for (const TuningStrategy& s : std::vector<TuningStrategy>{FullFineTune{}, VariableFineTune{1}, LayerNormOnly{},
                                                             AdapterTuning{kAdapter}}) {
    const ParameterPartition p = trainable_partition(s, c, 2);
    const ShapeMap shapes = task_model_shapes(c, s, 2);
    EXPECT_EQ(p.trainable.size() + p.frozen.size(), shapes.size());
    std::size_t total = 0;
    for (const auto& [name, shape] : shapes) {
      total += shape_numel(shape);
      EXPECT_NE(p.trainable.contains(name), p.frozen.contains(name)) << name;
    }
    EXPECT_EQ(p.total_count(), total);
  }
}

TEST(PartitionTest, FullAndTopAllAreEverything) {
  const ModelConfig c = tiny_config();
  const auto full = trainable_partition(FullFineTune{}, c, 2);
  EXPECT_EQ(full.trainable_fraction(), 1.0);
  EXPECT_TRUE(full.frozen.empty());
  const auto top_all = trainable_partition(VariableFineTune{c.layers}, c, 2);
  EXPECT_EQ(top_all.trainable, full.trainable);
}

TEST(PartitionTest, TopZeroIsHeadOnly) {
  const auto p = trainable_partition(VariableFineTune{0}, tiny_config(), 2);
  EXPECT_EQ(p.trainable, (NameSet{std::string(names::kHeadWeight), std::string(names::kHeadBias)}));
}

TEST(PartitionTest, TopLayersOnly) {
  const ModelConfig c = tiny_config();
  const auto p = trainable_partition(VariableFineTune{1}, c, 2);
  for (const auto& name : p.trainable) {
    const bool ok = names::is_head(name) || names::layer_of(name) == std::optional<std::size_t>(1);
    EXPECT_TRUE(ok) << name;
  }
  EXPECT_TRUE(p.frozen.contains("layer.0.attn.query.weight"));
  EXPECT_TRUE(p.frozen.contains(std::string(names::kTokenEmbedding)));
  EXPECT_THROW(trainable_partition(VariableFineTune{3}, c, 2), RangeError);
}

TEST(PartitionTest, AdapterTrainsAdaptersNormsAndHead) {
  const ModelConfig c = tiny_config();
  const auto p = trainable_partition(AdapterTuning{kAdapter}, c, 2);
  for (const auto& name : p.trainable)
    EXPECT_TRUE(names::is_adapter(name) || names::is_layer_norm(name) || names::is_head(name)) << name;
  const std::size_t d = c.width;
  const std::size_t expected = 2 * c.layers * adapter_param_count(d, 4) +
                               layernorm_param_count(d, 2 * c.layers + 1) + d * 2 + 2;
  EXPECT_EQ(p.trainable_count, expected);
}

TEST(PartitionTest, LayerNormCountAtBaseGeometry) {
  const ModelConfig c = base_geometry();
  const auto p = trainable_partition(LayerNormOnly{}, c, 2);
  const std::size_t head = c.width * 2 + 2;
  EXPECT_EQ(p.trainable_count - head, 38400u);
}

TEST(RegistryTest, AddActivateAndErrors) {
  TaskRegistry reg(tiny_base());
  reg.add_task("a", AdapterTuning{kAdapter}, 2, 1);
  EXPECT_THROW(reg.add_task("a", LayerNormOnly{}, 2, 1), ConflictError);
  EXPECT_THROW(reg.activate("missing"), NotFoundError);
  EXPECT_THROW(reg.add_task("bad id", LayerNormOnly{}, 2, 1), InputError);
  EXPECT_TRUE(reg.contains("a"));
  EXPECT_EQ(reg.size(), 1u);
  ModelView view = reg.activate("a");
  EXPECT_TRUE(find_adapter(view, 1, AdapterSite::kFeedForward).has_value());
}

TEST(RegistryTest, ArtifactsLeaveBaseUntouched) {
  auto base = tiny_base();
  const ParameterMap before = base->frozen_copy().tensors;
  TaskRegistry reg(base);
  reg.add_task("full", FullFineTune{}, 2, 1);
  TaskArtifact art = reg.artifact("full");
  for (auto& [name, t] : art.parameters) t.mutable_values()[0] += 1.0;
  EXPECT_TRUE(bit_equal(before, base->tensors));
  for (const auto& [name, t] : art.parameters) {
    if (base->tensors.contains(name)) {
      EXPECT_FALSE(t.shares_storage_with(base->get(name))) << name;
    }
  }
}

TEST(RegistryTest, StorageGrowsByArtifactSize) {
  auto base = tiny_base();
  TaskRegistry reg(base);
  const std::size_t base_count = base->parameter_count();
  EXPECT_EQ(reg.stored_parameter_count(), base_count);
  std::size_t expected = base_count;
  for (int i = 0; i < 3; ++i) {
    expected += reg.add_task("t" + std::to_string(i), AdapterTuning{kAdapter}, 2, i).parameter_count();
    EXPECT_EQ(reg.stored_parameter_count(), expected);
  }
  const auto full = trainable_partition(FullFineTune{}, base->config, 2);
  EXPECT_EQ(reg.add_task("f", FullFineTune{}, 2, 9).parameter_count(), full.trainable_count);
}

SyntheticTask small_task(TaskKind kind, std::uint64_t seed) {
  SyntheticTaskSpec spec;
  spec.kind = kind;
  spec.vocab = tiny_config().vocab;
  spec.content_length = 6;
  spec.train_size = 64;
  spec.validation_size = 32;
  spec.test_size = 32;
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

TEST(RegistryTest, StorageSlopeMatchesTrainedFraction) {
  ModelConfig c = tiny_config();
  c.width = 64;
  c.ffn_width = 256;
  c.heads = 4;
  auto base = std::make_shared<const BaseParameters>(BaseParameters::initialize(c, 1));
  TaskRegistry reg(base);
  const TuningStrategy s = AdapterTuning{kAdapter};
  std::vector<double> totals{static_cast<double>(reg.stored_parameter_count())};
  for (int i = 0; i < 4; ++i) {
    reg.add_task("t" + std::to_string(i), s, 2, i);
    totals.push_back(static_cast<double>(reg.stored_parameter_count()));
  }
  const double slope = (totals.back() - totals.front()) / 4.0 / totals.front();
  const double rho = trainable_partition(s, c, 2).trainable_fraction();
  EXPECT_NEAR(slope, rho, 0.05 * rho);
}

TEST(RegistryTest, ArtifactsNeverAlias) {
  TaskRegistry reg(tiny_base());
  reg.add_task("a", FullFineTune{}, 2, 1);
  reg.add_task("b", FullFineTune{}, 2, 1);
  const TaskArtifact a = reg.artifact("a"), b = reg.artifact("b");
  for (const auto& [name, t] : a.parameters) EXPECT_FALSE(t.shares_storage_with(b.parameters.at(name))) << name;
}

TEST(RegistryTest, PerfectMemoryAcrossTasks) {
  auto base = tiny_base();
  TaskRegistry reg(base);
  reg.add_task("a", AdapterTuning{kAdapter}, 2, 1);
  reg.add_task("b", AdapterTuning{kAdapter}, 2, 2);
  const auto task_a = small_task(TaskKind::kMajority, 3);
  const auto task_b = small_task(TaskKind::kParity, 4);
  const auto trained = train_task(reg, "a", task_a, quick_config());
  EXPECT_EQ(evaluate(reg.activate("a"), task_a.validation), reg.artifact("a").metadata.metrics.at("val_accuracy"));
  EXPECT_EQ(evaluate(reg.activate("a"), task_a.validation), trained.best_val_accuracy);
  const auto batch = make_batch(task_a.test);
  EXPECT_TRUE(bit_equal(classify(batch, reg.activate("a")), classify(batch, reg.activate("a"))));
  const Tensor before = classify(batch, reg.activate("a"));
  const ParameterMap frozen_before = base->frozen_copy().tensors;
  train_task(reg, "b", task_b, quick_config());
  EXPECT_TRUE(bit_equal(before, classify(batch, reg.activate("a"))));
  EXPECT_TRUE(bit_equal(frozen_before, base->tensors));
  EXPECT_FALSE(bit_equal(before, classify(batch, reg.activate("b"))));
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("adapterlab_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  TaskRegistry trained_registry() {
    TaskRegistry reg(tiny_base());
    reg.add_task("adapt", AdapterTuning{AdapterConfig{4, 1e-2, Nonlinearity::kGelu}}, 2, 1);
    reg.add_task("norms", LayerNormOnly{}, 3, 2);
    reg.add_task("top", VariableFineTune{1}, 2, 3);
    TrainHooks hooks;
    hooks.keep_optimizer_state = true;
    train_task(reg, "adapt", small_task(TaskKind::kMajority, 5), quick_config(), hooks);
    return reg;
  }

  fs::path dir_;
};

TEST_F(CheckpointTest, RegistryRoundTripIsBitExact) {
  TaskRegistry reg = trained_registry();
  reg.save(dir_);
  TaskRegistry loaded = TaskRegistry::load(dir_);
  EXPECT_TRUE(bit_equal(reg.base().tensors, loaded.base().tensors));
  EXPECT_EQ(loaded.base().config, reg.base().config);
  ASSERT_EQ(loaded.task_ids(), reg.task_ids());
  for (const auto& id : reg.task_ids()) {
    const TaskArtifact a = reg.artifact(id), b = loaded.artifact(id);
    EXPECT_EQ(a.strategy, b.strategy);
    EXPECT_EQ(a.num_classes, b.num_classes);
    EXPECT_TRUE(bit_equal(a.parameters, b.parameters)) << id;
    EXPECT_EQ(a.metadata.seed, b.metadata.seed);
    EXPECT_EQ(a.metadata.metrics, b.metadata.metrics);
  }
  const TaskArtifact adapted = loaded.artifact("adapt");
  ASSERT_TRUE(adapted.optimizer_state.has_value());
  EXPECT_EQ(adapted.optimizer_state->step, reg.artifact("adapt").optimizer_state->step);
  const auto batch = make_batch(small_task(TaskKind::kMajority, 5).test);
  EXPECT_TRUE(bit_equal(classify(batch, reg.activate("adapt")), classify(batch, loaded.activate("adapt"))));
}

TEST_F(CheckpointTest, MetaSidecarIsJson) {
  TaskRegistry reg = trained_registry();
  reg.save(dir_);
  std::ifstream in(dir_ / "tasks" / "adapt.meta");
  const auto meta = nlohmann::json::parse(in);
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), reg.artifact("adapt").metadata.seed);
  EXPECT_EQ(meta.at("strategy").get<std::string>(), "adapter:4:0.01:gelu");
  EXPECT_TRUE(meta.at("metrics").contains("val_accuracy"));
}

TEST_F(CheckpointTest, FlippedByteIsChecksumError) {
  TaskRegistry(tiny_base()).save(dir_);
  const fs::path file = dir_ / "base.ckpt";
  std::string bytes;
  {
    std::ifstream in(file, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() - 3] ^= 0x10;
  {
    std::ofstream out(file, std::ios::binary);
    out << bytes;
  }
  try {
    load_base_checkpoint(file);
    FAIL() << "tampered checkpoint loaded";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum mismatch"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, WrongConfigNamesOffendingTensor) {
  fs::create_directories(dir_);
  save_base_checkpoint(*tiny_base(), dir_ / "base.ckpt");
  ModelConfig other = tiny_config();
  other.width = 32;
  try {
    load_base_checkpoint(dir_ / "base.ckpt", &other);
    FAIL() << "mismatched config accepted";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("embed."), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, VersionMismatch) {
  fs::create_directories(dir_);
  const fs::path file = dir_ / "base.ckpt";
  save_base_checkpoint(*tiny_base(), file);
  std::string bytes;
  {
    std::ifstream in(file, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes.replace(bytes.find("version 1"), 9, "version 7");
  {
    std::ofstream out(file, std::ios::binary);
    out << bytes;
  }
  try {
    load_base_checkpoint(file);
    FAIL() << "future version accepted";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST_F(CheckpointTest, MissingDirectory) { EXPECT_THROW(TaskRegistry::load(dir_), LoadError); }

TEST(ChecksumTest, KnownVectors) {
  const std::string empty;
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  const std::string a = "a";
  EXPECT_EQ(fnv1a64(std::span(reinterpret_cast<const unsigned char*>(a.data()), a.size())), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace adapterlab
