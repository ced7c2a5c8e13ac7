#pragma once

#include <functional>
#include <vector>

#include "monoref/random.h"
#include "monoref/tensor.h"
#include "test_util.h"

namespace monoref::testing {

// One differentiable op applied to the input `x`; other operands are drawn
// from the supplied generator.
struct OpCase {
  const char* name;
  Shape shape;
  double lo, hi;
  std::function<NodeId(Graph&, NodeId, Rng&)> build;
};

inline std::vector<OpCase> OpCases() {
  const auto weights = [](Graph& g, Rng& rng, const Shape& s) {
    return g.Constant(RandomTensor(rng, s));
  };
  return {
      {"conv2d input", {1, 2, 4, 4}, -1, 1,
       [=](Graph& g, NodeId x, Rng& r) {
         return g.Conv2d(x, weights(g, r, {2, 2, 3, 3}), weights(g, r, {2}), 1, 1);
       }},
      {"conv2d kernel", {2, 2, 3, 3}, -1, 1,
       [=](Graph& g, NodeId k, Rng& r) {
         return g.Conv2d(weights(g, r, {1, 2, 5, 5}), k, weights(g, r, {2}), 2, 1);
       }},
      {"conv2d bias", {3}, -1, 1,
       [=](Graph& g, NodeId b, Rng& r) {
         return g.Conv2d(weights(g, r, {1, 2, 4, 4}), weights(g, r, {3, 2, 1, 1}),
                         b, 1, 0);
       }},
      {"sigmoid", {1, 2, 3, 3}, -3, 3,
       [](Graph& g, NodeId x, Rng&) { return g.Sigmoid(x); }},
      {"tanh", {1, 2, 3, 3}, -3, 3,
       [](Graph& g, NodeId x, Rng&) { return g.Tanh(x); }},
      {"concat", {1, 2, 3, 3}, -1, 1,
       [=](Graph& g, NodeId x, Rng& r) {
         return g.ConcatChannels({weights(g, r, {1, 1, 3, 3}), x, x});
       }},
      {"slice", {1, 4, 3, 3}, -1, 1,
       [](Graph& g, NodeId x, Rng&) { return g.SliceChannels(x, 1, 2); }},
      {"resize up", {1, 2, 3, 4}, -1, 1,
       [](Graph& g, NodeId x, Rng&) { return g.BilinearResize(x, 7, 5); }},
      {"resize down", {1, 1, 6, 6}, -1, 1,
       [](Graph& g, NodeId x, Rng&) { return g.BilinearResize(x, 3, 2); }},
      {"add", {1, 1, 3, 3}, -1, 1,
       [=](Graph& g, NodeId x, Rng& r) {
         return g.Add(x, weights(g, r, {1, 1, 3, 3}));
       }},
      {"sub", {1, 1, 3, 3}, -1, 1,
       [=](Graph& g, NodeId x, Rng& r) {
         return g.Sub(weights(g, r, {1, 1, 3, 3}), x);
       }},
      {"mul", {1, 1, 3, 3}, -1, 1,
       [=](Graph& g, NodeId x, Rng& r) {
         return g.Mul(x, g.Mul(x, weights(g, r, {1, 1, 3, 3})));
       }},
      {"affine", {1, 1, 3, 3}, -1, 1,
       [](Graph& g, NodeId x, Rng&) { return g.Affine(x, -2.5, 0.75); }},
      {"log", {1, 1, 3, 3}, 0.5, 3,
       [](Graph& g, NodeId x, Rng&) { return g.Log(x); }},
      {"channel norm", {1, 3, 3, 3}, 0.2, 1,
       [](Graph& g, NodeId x, Rng&) { return g.ChannelNorm(x); }},
      {"div scalar numerator", {1, 3, 2, 2}, -1, 1,
       [](Graph& g, NodeId x, Rng&) {
         return g.DivScalar(x, g.Constant(Tensor::Scalar(1.7)));
       }},
      {"div scalar denominator", {1}, 0.5, 2,
       [=](Graph& g, NodeId s, Rng& r) {
         return g.DivScalar(weights(g, r, {1, 3, 2, 2}), s);
       }},
      {"mul scalar", {1}, -2, 2,
       [=](Graph& g, NodeId s, Rng& r) {
         return g.MulScalar(weights(g, r, {1, 3, 2, 2}), s);
       }},
      {"masked mean", {1, 1, 3, 3}, -1, 1,
       [](Graph& g, NodeId x, Rng&) {
         return g.MaskedMean(
             x, Tensor({1, 1, 3, 3}, {1, 0, 1, 1, 1, 0, 0, 1, 1}));
       }},
      {"sum", {2, 3}, -1, 1, [](Graph& g, NodeId x, Rng&) { return g.Sum(x); }},
  };
}

// Gradient-check error of `op` at random point `point`. A fixed random
// readout makes the scalar depend on every output entry.
inline double OpGradientError(const OpCase& op, int op_index, int point) {
  Rng rng(MixSeed(1000 + op_index, point));
  const Tensor x = RandomTensor(rng, op.shape, op.lo, op.hi);
  const std::uint64_t weight_seed = rng.Next();
  const ScalarFn f = [&](Graph& g, NodeId in) {
    Rng wr(weight_seed);
    const NodeId y = op.build(g, in, wr);
    const Tensor readout = RandomTensor(wr, g.value(y).shape());
    return g.Sum(g.Mul(y, g.Constant(readout)));
  };
  return GradCheck(f, x);
}

}  // namespace monoref::testing
