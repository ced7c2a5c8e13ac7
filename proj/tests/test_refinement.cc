#include <gtest/gtest.h>

#include <cmath>

#include "monoref/error.h"
#include "monoref/refinement.h"
#include "monoref/synth.h"
#include "monoref/training.h"
#include "test_util.h"

namespace monoref {
namespace {

using testing::CompositeLoss;
using testing::MaxAbsDiff;
using testing::PerturbZeroInit;
using testing::RandomTensor;

RefineConfig SmallConfig(int iterations = 2) {
  RefineConfig c;
  c.iterations = iterations;
  c.hidden_channels = 4;
  c.cond_channels = 4;
  c.mono_channels = 5;
  c.pair_channels = 6;
  return c;
}

RefineInputs RandomInputs(Rng& rng, const RefineConfig& c, std::size_t h,
                          std::size_t w) {
  RefineInputs in;
  PointList pair(h * w), mono(h * w);
  std::vector<Vec3> colors(h * w);
  std::vector<double> conf(h * w);
  for (std::size_t k = 0; k < h * w; ++k) {
    pair[k] = Vec3(rng.Uniform(-1, 1), rng.Uniform(-1, 1), rng.Uniform(2, 4));
    mono[k] = pair[k] + 0.1 * Vec3(rng.Normal(), rng.Normal(), rng.Normal());
    colors[k] = Vec3(rng.Uniform(), rng.Uniform(), rng.Uniform());
    conf[k] = 1.0 + rng.Uniform(0, 3);
  }
  in.pair = Pointmap(h, w, pair, Mask(h, w));
  in.mono_aligned = Pointmap(h, w, mono, Mask(h, w));
  in.confidence = ConfidenceMap(h, w, conf);
  in.image = ImageGrid(h, w, colors);
  in.mono_features = RandomTensor(rng, {1, c.mono_channels, h, w});
  in.pair_features = RandomTensor(rng, {1, c.pair_channels, h, w});
  return in;
}

RefineWeights RandomWeights(const RefineConfig& c, std::uint64_t seed) {
  RefineWeights w = RefineWeights::Initialize(c, seed);
  Rng rng(seed + 1);
  PerturbZeroInit(w, rng);
  return w;
}

Tensor ZeroLike(const Tensor& t) { return Tensor::Zeros(t.shape()); }

TEST(ConfigTest, Validation) {
  RefineConfig c;
  c.iterations = 0;
  EXPECT_THROW(c.Validate(), Error);
  c = RefineConfig{};
  c.kernel_size = 4;
  EXPECT_THROW(c.Validate(), Error);
  c = RefineConfig{};
  EXPECT_EQ(c.iterations, 2);
  EXPECT_EQ(c.condition_input_channels(), 199u);
}

TEST(InitTest, DeterministicAndZeroFinalLayer) {
  const RefineWeights a = RefineWeights::Initialize(RefineConfig{}, 7);
  const RefineWeights b = RefineWeights::Initialize(RefineConfig{}, 7);
  std::vector<Tensor> ta, tb;
  a.Visit([&](const std::string&, const Tensor& t) { ta.push_back(t); });
  b.Visit([&](const std::string&, const Tensor& t) { tb.push_back(t); });
  ASSERT_EQ(ta.size(), 16u);
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE(ta[i].BitwiseEqual(tb[i]));
  for (double v : a.decoder.conv2_kernel.data()) EXPECT_EQ(v, 0.0);
  for (double v : a.decoder.conv2_bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeTest, ZeroWeightsGiveZeroOutput) {
  Rng rng(1);
  const RefineConfig c = SmallConfig();
  RefineWeights w = RandomWeights(c, 3);
  w.encoder.conv1_kernel = ZeroLike(w.encoder.conv1_kernel);
  w.encoder.conv1_bias = ZeroLike(w.encoder.conv1_bias);
  w.encoder.conv2_kernel = ZeroLike(w.encoder.conv2_kernel);
  w.encoder.conv2_bias = ZeroLike(w.encoder.conv2_bias);
  const RefineInputs in = RandomInputs(rng, c, 5, 6);
  const Tensor out = EncodeCondition(in.mono_aligned, in.mono_features,
                                     in.pair_features, in.confidence, in.image, w);
  EXPECT_EQ(out.shape(), (Shape{1, c.cond_channels, 5, 6}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeTest, MatchesTwoConvComposition) {
  Rng rng(2);
  const RefineConfig c = SmallConfig();
  const RefineWeights w = RandomWeights(c, 4);
  const RefineInputs in = RandomInputs(rng, c, 6, 5);
  const Tensor x = ConditionInputs(in.mono_aligned, in.mono_features,
                                   in.pair_features, in.confidence, in.image);
  EXPECT_EQ(x.dim(1), c.condition_input_channels());
  const Tensor oracle = Conv2d(
      Activate(Activation::kTanh,
               Conv2d(x, w.encoder.conv1_kernel, w.encoder.conv1_bias, 1, 1)),
      w.encoder.conv2_kernel, w.encoder.conv2_bias, 1, 1);
  const Tensor out = EncodeCondition(in.mono_aligned, in.mono_features,
                                     in.pair_features, in.confidence, in.image, w);
  EXPECT_TRUE(out.BitwiseEqual(oracle));
}

TEST(EncodeTest, PointwiseKernelsArePermutationEquivariant) {
  Rng rng(3);
  RefineConfig c = SmallConfig();
  c.kernel_size = 1;
  const RefineWeights w = RandomWeights(c, 5);
  const RefineInputs in = RandomInputs(rng, c, 4, 4);
  const Tensor x = ConditionInputs(in.mono_aligned, in.mono_features,
                                   in.pair_features, in.confidence, in.image);
  // Swap pixels (0,1) and (3,2) across every channel.
  std::vector<double> swapped(x.data().begin(), x.data().end());
  const std::size_t a = 0 * 4 + 1, b = 3 * 4 + 2;
  for (std::size_t ch = 0; ch < x.dim(1); ++ch) {
    std::swap(swapped[ch * 16 + a], swapped[ch * 16 + b]);
  }
  const auto encode = [&](const Tensor& t) {
    Graph g;
    const RefineParams p = RefineParams::Add(g, w, false);
    return g.value(EncodeCondition(g, g.Constant(t), p, 0));
  };
  const Tensor y = encode(x);
  const Tensor ys = encode(Tensor(x.shape(), swapped));
  for (std::size_t ch = 0; ch < y.dim(1); ++ch) {
    EXPECT_EQ(ys[ch * 16 + a], y[ch * 16 + b]);
    EXPECT_EQ(ys[ch * 16 + b], y[ch * 16 + a]);
    EXPECT_EQ(ys[ch * 16 + 5], y[ch * 16 + 5]);
  }
}

TEST(EncodeTest, SpatialMismatchThrows) {
  Rng rng(4);
  const RefineConfig c = SmallConfig();
  RefineInputs in = RandomInputs(rng, c, 4, 4);
  in.pair_features = RandomTensor(rng, {1, c.pair_channels, 4, 5});
  EXPECT_THROW(ConditionInputs(in.mono_aligned, in.mono_features,
                               in.pair_features, in.confidence, in.image),
               Error);
}

TEST(GruTest, AllZeroGivesHalfGatesAndZeroState) {
  const RefineConfig c = SmallConfig();
  RefineWeights w = RefineWeights::Initialize(c, 1);
  w.gru.update_kernel = ZeroLike(w.gru.update_kernel);
  w.gru.reset_kernel = ZeroLike(w.gru.reset_kernel);
  w.gru.candidate_kernel = ZeroLike(w.gru.candidate_kernel);
  const GruStepResult r =
      GruStep(Tensor::Zeros({1, c.hidden_channels, 3, 3}),
              Tensor::Zeros({1, c.cond_channels, 3, 3}), w);
  for (double v : r.update_gate.data()) EXPECT_EQ(v, 0.5);
  for (double v : r.reset_gate.data()) EXPECT_EQ(v, 0.5);
  for (double v : r.candidate.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.hidden.data()) EXPECT_EQ(v, 0.0);
}

TEST(GruTest, SaturatedUpdateGateLimits) {
  Rng rng(5);
  const RefineConfig c = SmallConfig();
  RefineWeights w = RefineWeights::Initialize(c, 2);
  w.gru.update_kernel = ZeroLike(w.gru.update_kernel);
  const Tensor h = RandomTensor(rng, {1, c.hidden_channels, 4, 4}, -0.9, 0.9);
  const Tensor x = RandomTensor(rng, {1, c.cond_channels, 4, 4});

  w.gru.update_context = Tensor::Filled({c.hidden_channels}, 20.0);
  const GruStepResult open = GruStep(h, x, w);
  EXPECT_LE(MaxAbsDiff(open.hidden, open.candidate), 1e-8);

  w.gru.update_context = Tensor::Filled({c.hidden_channels}, -20.0);
  const GruStepResult closed = GruStep(h, x, w);
  EXPECT_LE(MaxAbsDiff(closed.hidden, h), 1e-8);
}

TEST(GruTest, StateAndGatesStayInOpenIntervals) {
  Rng rng(6);
  const RefineConfig c = SmallConfig();
  for (int trial = 0; trial < 200; ++trial) {
    RefineWeights w = RefineWeights::Initialize(c, rng.Next());
    w.VisitMutable([&](const std::string&, Tensor& t) {
      t = RandomTensor(rng, t.shape(), -3.0, 3.0);
    });
    Tensor h = RandomTensor(rng, {1, c.hidden_channels, 3, 3}, -0.999, 0.999);
    for (int step = 0; step < 5; ++step) {
      const GruStepResult r =
          GruStep(h, RandomTensor(rng, {1, c.cond_channels, 3, 3}, -5, 5), w);
      for (double v : r.hidden.data()) ASSERT_TRUE(v > -1.0 && v < 1.0);
      for (double v : r.update_gate.data()) ASSERT_TRUE(v > 0.0 && v < 1.0);
      for (double v : r.reset_gate.data()) ASSERT_TRUE(v > 0.0 && v < 1.0);
      h = r.hidden;
    }
  }
}

TEST(GruTest, ShapeMismatchThrows) {
  const RefineConfig c = SmallConfig();
  const RefineWeights w = RefineWeights::Initialize(c, 3);
  EXPECT_THROW(GruStep(Tensor::Zeros({1, c.hidden_channels + 1, 3, 3}),
                       Tensor::Zeros({1, c.cond_channels, 3, 3}), w),
               Error);
}

TEST(DecodeTest, ZeroFinalLayerGivesZeroOffsets) {
  Rng rng(7);
  const RefineConfig c = SmallConfig();
  const RefineWeights w = RefineWeights::Initialize(c, 4);
  const Tensor off =
      DecodeOffset(RandomTensor(rng, {1, c.hidden_channels, 5, 5}), w, 3.0);
  EXPECT_EQ(off.shape(), (Shape{1, 3, 5, 5}));
  for (double v : off.data()) EXPECT_EQ(v, 0.0);
}

TEST(DecodeTest, ConstantStateGivesConstantInterior) {
  const RefineConfig c = SmallConfig();
  const RefineWeights w = RandomWeights(c, 5);
  const Tensor off =
      DecodeOffset(Tensor::Filled({1, c.hidden_channels, 7, 7}, 0.3), w);
  // Two 3x3 layers: pixels at least two away from the border see no padding.
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double ref = off.at(0, ch, 3, 3);
    for (std::size_t r = 2; r <= 4; ++r)
      for (std::size_t q = 2; q <= 4; ++q) EXPECT_EQ(off.at(0, ch, r, q), ref);
  }
}

TEST(DecodeTest, MatchesTwoConvComposition) {
  Rng rng(8);
  const RefineConfig c = SmallConfig();
  const RefineWeights w = RandomWeights(c, 6);
  const Tensor h = RandomTensor(rng, {1, c.hidden_channels, 5, 4});
  const Tensor oracle = Conv2d(
      Activate(Activation::kTanh, Conv2d(h, w.decoder.conv1_kernel,
                                         w.decoder.conv1_bias, 1, 1)),
      w.decoder.conv2_kernel, w.decoder.conv2_bias, 1, 1);
  EXPECT_TRUE(DecodeOffset(h, w).BitwiseEqual(oracle));
}

TEST(RefineTest, FreshWeightsLeavePointmapUnchanged) {
  Rng rng(9);
  const RefineConfig c = SmallConfig(3);
  const RefineInputs in = RandomInputs(rng, c, 6, 6);
  const std::vector<Pointmap> out =
      Refine(in, RefineWeights::Initialize(c, 10));
  ASSERT_EQ(out.size(), 3u);
  for (const Pointmap& pm : out) EXPECT_EQ(pm, in.pair);
}

TEST(RefineTest, PrefixConsistency) {
  Rng rng(10);
  RefineWeights w = RandomWeights(SmallConfig(1), 11);
  const RefineInputs in = RandomInputs(rng, w.config, 6, 6);
  const std::vector<Pointmap> one = Refine(in, w);
  w.config.iterations = 3;
  const std::vector<Pointmap> three = Refine(in, w);
  w.config.iterations = 2;
  const std::vector<Pointmap> two = Refine(in, w);
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(one[0], three[0]);
  EXPECT_EQ(two[0], three[0]);
  EXPECT_EQ(two[1], three[1]);
  EXPECT_NE(three[0], in.pair);
}

TEST(RefineTest, InvalidPixelsStayFixed) {
  Rng rng(11);
  const RefineWeights w = RandomWeights(SmallConfig(2), 12);
  RefineInputs in = RandomInputs(rng, w.config, 5, 5);
  Mask m(5, 5, true);
  m.set(7, false);
  in.pair = MaskInvalid(in.pair, m);
  for (const Pointmap& pm : Refine(in, w)) {
    EXPECT_EQ(pm.mask(), m);
    EXPECT_EQ(pm[7], Vec3::Zero());
  }
}

TEST(RefineTest, FeatureChannelMismatchThrows) {
  Rng rng(12);
  const RefineWeights w = RandomWeights(SmallConfig(), 13);
  RefineInputs in = RandomInputs(rng, w.config, 4, 4);
  in.mono_features = RandomTensor(rng, {1, 3, 4, 4});
  EXPECT_THROW(Refine(in, w), Error);
}

TEST(RefineTest, HiddenStateStaysBounded) {
  Rng rng(13);
  const RefineWeights w = RandomWeights(SmallConfig(4), 14);
  const RefineInputs in = RandomInputs(rng, w.config, 5, 5);
  Graph g;
  const RefineParams p = RefineParams::Add(g, w, false);
  const RefineNodes nodes =
      RefineOnGraph(g, g.Constant(in.pair.ToTensor()), in, p, w.config);
  ASSERT_EQ(nodes.hidden.size(), 5u);
  for (NodeId id : nodes.hidden) {
    for (double v : g.value(id).data()) EXPECT_TRUE(v > -1.0 && v < 1.0);
  }
}

class CompositeGradientTest : public ::testing::TestWithParam<int> {};

TEST_P(CompositeGradientTest, MatchesFiniteDifferences) {
  RefineConfig c;
  c.hidden_channels = 4;
  c.cond_channels = 4;
  const PreparedScene scene = PrepareScene(MakeScene(3, 8, 8));
  const RefineWeights w = RandomWeights(c, 21);
  const int slot = GetParam();
  std::vector<Tensor> params;
  w.Visit([&](const std::string&, const Tensor& t) { params.push_back(t); });
  const Tensor x = slot == -1   ? scene.inputs[0].pair.ToTensor()
                   : slot == -2 ? scene.inputs[0].confidence.ToTensor()
                                : params[slot];
  const ScalarFn f = [&](Graph& g, NodeId in) {
    return CompositeLoss(g, in, slot, scene, w);
  };
  EXPECT_LE(GradCheck(f, x), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(EveryInput, CompositeGradientTest,
                         ::testing::Range(-2, 16));

}  // namespace
}  // namespace monoref
