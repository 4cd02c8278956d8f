#include <gtest/gtest.h>

#include <cmath>

#include "adapterlab/adapter.hpp"
#include "adapterlab/errors.hpp"
#include "adapterlab/ops.hpp"
#include "adapterlab/registry.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

namespace adapterlab {
namespace {

using testing::bit_equal;

AdapterParameters hand_adapter() {
  // d = 2, m = 1
  return AdapterParameters{Tensor({2, 1}, {0.1, 0.1}), Tensor({1}, {0.0}), Tensor({1, 2}, {0.5, -0.5}),
                           Tensor({2}, {0.0, 0.0})};
}

TEST(AdapterForwardTest, HandExamples) {
  const AdapterParameters p = hand_adapter();
  Tensor y = adapter_forward(Tensor({1, 2}, {1.0, 1.0}), p, Nonlinearity::kRelu);
  EXPECT_DOUBLE_EQ(y.at(0), 1.1);
  EXPECT_DOUBLE_EQ(y.at(1), 0.9);
  // Bottleneck pre-activation -0.2 is cut by ReLU; only the skip path remains.
  Tensor z = adapter_forward(Tensor({1, 2}, {-1.0, -1.0}), p, Nonlinearity::kRelu);
  EXPECT_EQ(z.at(0), -1.0);
  EXPECT_EQ(z.at(1), -1.0);
}

TEST(AdapterForwardTest, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(adapter_forward(Tensor::zeros({1, 3}), hand_adapter(), Nonlinearity::kRelu), DimensionError);
}

TEST(AdapterInitTest, ZeroScaleGivesZeros) {
  Rng rng(1);
  AdapterParameters p = init_adapter(16, AdapterConfig{4, 0.0, Nonlinearity::kRelu}, rng);
  for (const Tensor* t : {&p.down_weight, &p.down_bias, &p.up_weight, &p.up_bias})
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
}

TEST(AdapterInitTest, ShapesAndTruncation) {
  Rng rng(2);
  AdapterParameters p = init_adapter(16, AdapterConfig{4, 1e-2, Nonlinearity::kRelu}, rng);
  EXPECT_EQ(p.down_weight.shape(), (Shape{16, 4}));
  EXPECT_EQ(p.down_bias.shape(), (Shape{4}));
  EXPECT_EQ(p.up_weight.shape(), (Shape{4, 16}));
  EXPECT_EQ(p.up_bias.shape(), (Shape{16}));
  EXPECT_EQ(p.element_count(), adapter_param_count(16, 4));
  for (const Tensor* t : {&p.down_weight, &p.down_bias, &p.up_weight, &p.up_bias})
    for (double v : t->values()) EXPECT_LE(std::abs(v), 0.02);
}

TEST(AdapterInitTest, EmpiricalSpreadMatchesTruncatedNormal) {
  // A normal truncated at two standard deviations keeps about 0.8796 of sigma.
  Rng rng(3);
  std::vector<double> samples;
  while (samples.size() < 100000) {
    AdapterParameters p = init_adapter(100, AdapterConfig{50, 1e-2, Nonlinearity::kRelu}, rng);
    for (double v : p.down_weight.values()) samples.push_back(v);
    for (double v : p.up_weight.values()) samples.push_back(v);
  }
  double mean = 0.0, sq = 0.0;
  for (double v : samples) mean += v;
  mean /= samples.size();
  for (double v : samples) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (samples.size() - 1));
  EXPECT_NEAR(sd, 0.01 * 0.8796, 0.15 * 0.01 * 0.8796);
  EXPECT_NEAR(mean, 0.0, 1e-4);
}

TEST(AdapterInitTest, Validation) {
  Rng rng(4);
  EXPECT_THROW(init_adapter(16, AdapterConfig{0, 1e-2, Nonlinearity::kRelu}, rng), RangeError);
  EXPECT_THROW(init_adapter(16, AdapterConfig{17, 1e-2, Nonlinearity::kRelu}, rng), RangeError);
  EXPECT_THROW(init_adapter(16, AdapterConfig{4, -1.0, Nonlinearity::kRelu}, rng), RangeError);
  EXPECT_TRUE(AdapterConfig({16, 1e-2, Nonlinearity::kRelu}).validate(16));
  EXPECT_FALSE(AdapterConfig({4, 1e-2, Nonlinearity::kRelu}).validate(16));
}

TEST(AttachTest, TwoPerLayerAndBaseUntouched) {
  auto base = testing::tiny_base();
  const ParameterMap before = base->frozen_copy().tensors;
  Rng rng(5);
  auto adapters = attach_adapters(*base, AdapterConfig{4, 1e-2, Nonlinearity::kRelu}, rng);
  EXPECT_EQ(adapters.size(), base->config.layers);
  EXPECT_TRUE(bit_equal(before, base->tensors));

  ParameterMap stored;
  store_adapters(stored, adapters, true);
  EXPECT_EQ(stored.size(), 4 * 2 * base->config.layers);
  for (const auto& [name, t] : stored) {
    EXPECT_TRUE(names::is_adapter(name)) << name;
    EXPECT_TRUE(t.requires_grad());
  }
}

TEST(AttachTest, LargeGeometryInstanceCount) {
  ModelConfig c;
  c.layers = 24;
  c.width = 1024;
  c.heads = 16;
  c.ffn_width = 4096;
  c.vocab = 30522;
  c.max_len = 512;
  const ShapeMap shapes = adapter_parameter_shapes(c, 64);
  EXPECT_EQ(shapes.size() / 4, 48u);
  std::size_t total = 0;
  for (const auto& [name, s] : shapes) total += shape_numel(s);
  EXPECT_EQ(total, 48 * adapter_param_count(1024, 64));
}

TEST(CountTest, AdapterFormula) {
  EXPECT_EQ(adapter_param_count(2, 1), 7u);
  EXPECT_EQ(adapter_param_count(1024, 64), 132160u);
  EXPECT_EQ(adapter_param_count(768, 8), 13064u);
}

TEST(CountTest, LayerNormFormula) {
  EXPECT_EQ(layernorm_param_count(768, 25), 38400u);
  EXPECT_EQ(layernorm_param_count(1, 1), 2u);
  EXPECT_EQ(layernorm_param_count(16, 10), 320u);
}

std::vector<Tensor> random_inputs(std::size_t count, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Tensor> xs;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(d);
    for (double& e : v) e = u(rng);
    xs.emplace_back(Shape{1, d}, std::move(v));
  }
  return xs;
}

double max_deviation(const Tensor& x, const Tensor& y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) m = std::max(m, std::abs(y.at(i) - x.at(i)));
  return m;
}

TEST(NearIdentityTest, BoundHolds) {
  const std::size_t d = 16, m = 4;
  const auto xs = random_inputs(1000, d, 7);
  for (double sigma : {1e-4, 1e-3, 1e-2}) {
    const double bound = 4 * sigma * sigma * m * (d + 1) + 2 * sigma;
    for (Nonlinearity act : {Nonlinearity::kRelu, Nonlinearity::kGelu, Nonlinearity::kTanh}) {
      Rng rng(6);
      AdapterParameters p = init_adapter(d, AdapterConfig{m, sigma, act}, rng);
      for (const Tensor& x : xs) EXPECT_LE(max_deviation(x, adapter_forward(x, p, act)), bound) << sigma;
    }
  }
}

TEST(NearIdentityTest, DeviationGrowsWithScale) {
  const std::size_t d = 16, m = 4;
  const auto xs = random_inputs(200, d, 8);
  double previous = 0.0;
  for (double sigma : {1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
    Rng rng(9);
    AdapterParameters p = init_adapter(d, AdapterConfig{m, sigma, Nonlinearity::kRelu}, rng);
    double mean = 0.0;
    for (const Tensor& x : xs) mean += max_deviation(x, adapter_forward(x, p, Nonlinearity::kRelu));
    mean /= xs.size();
    EXPECT_GT(mean, previous) << sigma;
    previous = mean;
  }
}

TEST(AdapterGradientTest, MatchesFiniteDifferences) {
  for (Nonlinearity act : {Nonlinearity::kGelu, Nonlinearity::kTanh}) {
    Rng rng(10);
    AdapterParameters p = init_adapter(6, AdapterConfig{3, 0.5, act}, rng);
    for (Tensor* t : {&p.down_weight, &p.down_bias, &p.up_weight, &p.up_bias}) t->set_requires_grad(true);
    Tensor x = random_inputs(1, 12, 11)[0];
    x = ops::reshape(x, {2, 6});
    x.set_requires_grad(true);
    auto loss = [&] {
      Tensor y = adapter_forward(x, p, act);
      return ops::sum(ops::tanh(y));
    };
    auto r = testing::check_gradients(loss, {x, p.down_weight, p.down_bias, p.up_weight, p.up_bias});
    EXPECT_LT(r.max_error, 1e-6) << to_string(act) << " worst " << r.worst;
  }
}

TEST(AdapterGradientTest, FlowsThroughFrozenModel) {
  auto base = testing::tiny_base();
  TaskArtifact art = make_task_artifact(*base, "t", AdapterTuning{AdapterConfig{4}}, 2, 1);
  ParameterMap task;
  for (const auto& [name, t] : art.parameters) task.emplace(name, t.clone(true));
  ModelView view(base, task);
  const TokenBatch batch = TokenBatch::from_sequences({{0, 2, 5, 3}, {0, 7, 2, 2}});
  backward(ops::softmax_cross_entropy(classify(batch, view), std::vector<std::size_t>{0, 1}));
  for (std::size_t l = 0; l < base->config.layers; ++l) {
    for (AdapterSite site : {AdapterSite::kAttention, AdapterSite::kFeedForward}) {
      const Tensor& w = task.at(adapter_param_name(l, site, "down.weight"));
      ASSERT_TRUE(w.has_grad());
      double norm = 0.0;
      for (double g : w.grad()) norm += g * g;
      EXPECT_GT(norm, 0.0) << l;
    }
  }
  for (const auto& [name, t] : base->tensors) EXPECT_FALSE(t.has_grad()) << name;
}

}  // namespace
}  // namespace adapterlab
