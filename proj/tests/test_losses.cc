#include <gtest/gtest.h>

#include <cmath>

#include "monoref/error.h"
#include "monoref/losses.h"
#include "test_util.h"

namespace monoref {
namespace {

using testing::MaxAbsDiff;
using testing::RandomTensor;

Pointmap Filled(std::size_t h, std::size_t w, const Vec3& p) {
  return Pointmap(h, w, PointList(h * w, p), Mask(h, w, true));
}

Pointmap RandomMap(Rng& rng, std::size_t h, std::size_t w) {
  PointList pts(h * w);
  for (Vec3& p : pts) {
    p = Vec3(rng.Uniform(-1, 1), rng.Uniform(-1, 1), rng.Uniform(1, 3));
  }
  return Pointmap(h, w, pts, Mask(h, w, true));
}

TEST(IterationWeightsTest, DefaultDecayTwoIterations) {
  const std::vector<double> w = IterationWeights(2, 0.9);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], 0.9);
  EXPECT_EQ(w[1], 1.0);
}

TEST(IterationWeightsTest, StrictlyIncreasingBelowOne) {
  for (double gamma : {0.1, 0.5, 0.9, 0.99}) {
    const std::vector<double> w = IterationWeights(6, gamma);
    for (std::size_t v = 1; v < w.size(); ++v) EXPECT_LT(w[v - 1], w[v]);
    EXPECT_EQ(w.back(), 1.0);
  }
  EXPECT_THROW(IterationWeights(0, 0.9), Error);
}

TEST(LossConfigTest, Validation) {
  EXPECT_THROW((LossConfig{0.0, 0.1}).Validate(), Error);
  EXPECT_THROW((LossConfig{1.5, 0.1}).Validate(), Error);
  EXPECT_THROW((LossConfig{0.9, -1.0}).Validate(), Error);
  EXPECT_NO_THROW((LossConfig{1.0, 0.0}).Validate());
}

TEST(RefineLossTest, ZeroAtGroundTruth) {
  Rng rng(1);
  const Pointmap gt = RandomMap(rng, 6, 6);
  EXPECT_EQ(LossRefine({{gt, gt}, {gt, gt}}, {gt, gt}, LossConfig{}), 0.0);
}

TEST(RefineLossTest, UnitErrorsSumToIterationWeights) {
  // The normalised prediction sits 60 degrees away from the normalised ground
  // truth on the unit sphere, so every pixel has residual exactly 1.
  const Pointmap gt = Filled(4, 4, Vec3(0, 0, 1));
  const Pointmap pred =
      Filled(4, 4, 3.0 * Vec3(std::sqrt(3.0) / 2.0, 0.0, 0.5));
  EXPECT_NEAR(LossRefine({{pred, pred}}, {gt}, LossConfig{0.9, 0.2}), 1.9,
              1e-12);
}

TEST(RefineLossTest, JointRescalingInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Pointmap gt = RandomMap(rng, 5, 5);
    const Pointmap p1 = RandomMap(rng, 5, 5), p2 = RandomMap(rng, 5, 5);
    const double base = LossRefine({{p1, p2}}, {gt}, LossConfig{});
    const double scaled = LossRefine({{p1.Scaled(10), p2.Scaled(10)}},
                                     {gt.Scaled(10)}, LossConfig{});
    EXPECT_NEAR(base, scaled, 1e-12);
  }
}

TEST(RefineLossTest, NonnegativeAndGradientMatches) {
  Rng rng(3);
  const Pointmap gt = RandomMap(rng, 4, 4);
  const Mask valid(4, 4, true);
  const Pointmap other = RandomMap(rng, 4, 4);
  const ScalarFn f = [&](Graph& g, NodeId x) {
    const ViewPrediction view{{x, g.Constant(other.ToTensor())}, valid};
    return RefineLoss(g, {view}, {gt}, LossConfig{});
  };
  const Tensor x = RandomMap(rng, 4, 4).ToTensor();
  EXPECT_LE(GradCheck(f, x), 1e-4);
  Graph g;
  EXPECT_GE(g.value(f(g, g.Constant(x))).item(), 0.0);
}

TEST(RefineLossTest, EmptyGroundTruthThrows) {
  const Pointmap gt(3, 3, PointList(9, Vec3(0, 0, 1)), Mask(3, 3, false));
  const Pointmap pred = Filled(3, 3, Vec3(0, 0, 1));
  EXPECT_THROW(LossRefine({{pred}}, {gt}, LossConfig{}), Error);
}

TEST(PairLossTest, ZeroAtGroundTruthWithUnitConfidence) {
  Rng rng(4);
  const Pointmap gt = RandomMap(rng, 5, 5);
  EXPECT_EQ(LossPair({gt}, {ConfidenceMap(5, 5, 1.0)}, {gt}, LossConfig{}),
            0.0);
}

TEST(PairLossTest, RegularizerIsLinearInAlpha) {
  Rng rng(5);
  const Pointmap gt = RandomMap(rng, 5, 5);
  const ConfidenceMap e(5, 5, std::exp(1.0));
  EXPECT_NEAR(LossPair({gt}, {e}, {gt}, LossConfig{0.9, 0.3}), -0.3, 1e-15);
  EXPECT_NEAR(LossPair({gt}, {e}, {gt}, LossConfig{0.9, 0.6}), -0.6, 1e-15);
}

TEST(PairLossTest, StationaryConfidenceIsAlphaOverResidual) {
  // Uniform residual r = 1 from the 60-degree construction above.
  const Pointmap gt = Filled(3, 3, Vec3(0, 0, 1));
  const Pointmap pred = Filled(3, 3, Vec3(std::sqrt(3.0) / 2.0, 0.0, 0.5));
  const double r = 1.0;
  for (double alpha : {0.05, 0.2, 0.7}) {
    const LossConfig config{0.9, alpha};
    const auto loss = [&](double w) {
      return LossPair({pred}, {ConfidenceMap(3, 3, w)}, {gt}, config);
    };
    // Golden-section search on the convex 1-D objective.
    double lo = 1e-3, hi = 10.0;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
      const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
      if (loss(a) < loss(b)) {
        hi = b;
      } else {
        lo = a;
      }
    }
    EXPECT_NEAR(0.5 * (lo + hi), alpha / r, 1e-6) << alpha;
    EXPECT_NEAR(loss(alpha / r), alpha - alpha * std::log(alpha / r), 1e-12);
  }
}

TEST(PairLossTest, NonnegativeWhenAlphaIsZero) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Pointmap gt = RandomMap(rng, 4, 4), pred = RandomMap(rng, 4, 4);
    std::vector<double> w(16);
    for (double& v : w) v = rng.Uniform(1.0, 5.0);
    EXPECT_GE(LossPair({pred}, {ConfidenceMap(4, 4, w)}, {gt},
                       LossConfig{0.9, 0.0}),
              0.0);
  }
}

TEST(PairLossTest, NonpositiveConfidenceThrows) {
  const Pointmap gt = Filled(2, 2, Vec3(0, 0, 1));
  EXPECT_THROW(LossPair({gt}, {ConfidenceMap(2, 2, 0.0)}, {gt}, LossConfig{}),
               Error);
}

TEST(PairLossTest, ConfidenceGradient) {
  Rng rng(7);
  const Pointmap gt = RandomMap(rng, 3, 3), pred = RandomMap(rng, 3, 3);
  const ScalarFn f = [&](Graph& g, NodeId w) {
    const ViewPrediction view{{g.Constant(pred.ToTensor())}, pred.mask()};
    return PairLoss(g, {view}, {w}, {gt}, LossConfig{0.9, 0.2});
  };
  EXPECT_LE(GradCheck(f, RandomTensor(rng, {1, 1, 3, 3}, 1.0, 3.0)), 1e-4);
}

TEST(TotalLossTest, Sums) {
  EXPECT_EQ(TotalLoss(0.0, 0.0), 0.0);
  EXPECT_EQ(TotalLoss(1.5, 2.5), 4.0);
}

TEST(TotalLossTest, DetachedRefinementLeavesPairGradient) {
  Rng rng(8);
  const Pointmap gt = RandomMap(rng, 3, 3);
  const Tensor p0 = RandomMap(rng, 3, 3).ToTensor();
  const Tensor refined = RandomMap(rng, 3, 3).ToTensor();
  const Tensor conf = RandomTensor(rng, {1, 1, 3, 3}, 1.0, 2.0);
  const Mask valid(3, 3, true);

  const auto pair_grad = [&](bool with_refine) {
    Graph g;
    const NodeId x = g.Input(p0.WithRequiresGrad(true));
    const NodeId pair = PairLoss(g, {ViewPrediction{{x}, valid}},
                                 {g.Constant(conf)}, {gt}, LossConfig{});
    NodeId loss = pair;
    if (with_refine) {
      const NodeId detached = g.Constant(refined);
      loss = TotalLoss(g, pair,
                       RefineLoss(g, {ViewPrediction{{detached}, valid}}, {gt},
                                  LossConfig{}));
    }
    g.Backward(loss);
    return g.grad(x);
  };
  EXPECT_EQ(MaxAbsDiff(pair_grad(true), pair_grad(false)), 0.0);

  const ScalarFn total = [&](Graph& g, NodeId x) {
    return TotalLoss(
        g,
        PairLoss(g, {ViewPrediction{{x}, valid}}, {g.Constant(conf)}, {gt},
                 LossConfig{}),
        RefineLoss(g, {ViewPrediction{{g.Constant(refined)}, valid}}, {gt},
                   LossConfig{}));
  };
  EXPECT_LE(GradCheck(total, p0), 1e-4);
}

}  // namespace
}  // namespace monoref
