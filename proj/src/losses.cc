#include "monoref/losses.h"

#include <cmath>
#include <string>

#include "monoref/error.h"

namespace monoref {
namespace {

Tensor MaskToTensor(const Mask& mask) {
  std::vector<double> data(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) data[k] = mask[k] ? 1.0 : 0.0;
  return Tensor({1, 1, mask.height(), mask.width()}, std::move(data));
}

Tensor JointMask(const Mask& a, const Mask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "prediction and ground-truth grids differ");
  }
  std::vector<double> data(a.size());
  bool any = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    data[k] = (a[k] && b[k]) ? 1.0 : 0.0;
    any = any || data[k] != 0.0;
  }
  if (!any) {
    throw Error(ErrorCode::kInvalidArgument,
                "no pixel valid in both prediction and ground truth");
  }
  return Tensor({1, 1, a.height(), a.width()}, std::move(data));
}

void RequireGroundTruth(const Pointmap& gt) {
  if (gt.ValidCount() == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "empty ground truth: no valid pixels");
  }
}

// Per-pixel || P / z - Pgt / zgt || as a [1,1,H,W] node.
NodeId NormalizedResidual(Graph& graph, NodeId pred, const Mask& pred_valid,
                          const Pointmap& gt) {
  // Both sides go through the same ops so that pred == gt gives exactly 0.
  const auto normalized = [&](NodeId p, const Mask& valid) {
    const NodeId z =
        graph.MaskedMean(graph.ChannelNorm(p), MaskToTensor(valid));
    return graph.DivScalar(p, z);
  };
  const NodeId scaled_gt =
      normalized(graph.Constant(gt.ToTensor()), gt.mask());
  return graph.ChannelNorm(
      graph.Sub(normalized(pred, pred_valid), scaled_gt));
}

NodeId AddTerms(Graph& graph, const std::vector<NodeId>& terms) {
  NodeId total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    total = graph.Add(total, terms[i]);
  }
  return total;
}

}  // namespace

void LossConfig::Validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
  }
  if (!(alpha >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  }
}

std::vector<double> IterationWeights(int iterations, double gamma) {
  if (iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one iteration");
  }
  std::vector<double> weights(iterations);
  for (int v = 1; v <= iterations; ++v) {
    weights[v - 1] = std::pow(gamma, iterations - v);
  }
  return weights;
}

NodeId RefineLoss(Graph& graph, const std::vector<ViewPrediction>& preds,
                  const std::vector<Pointmap>& gt, const LossConfig& config) {
  config.Validate();
  if (preds.size() != gt.size() || preds.empty()) {
    throw Error(ErrorCode::kShapeMismatch,
                "refine loss: " + std::to_string(preds.size()) +
                    " predicted views vs " + std::to_string(gt.size()) +
                    " ground-truth views");
  }
  const int iterations = static_cast<int>(preds.front().iterates.size());
  const std::vector<double> weights = IterationWeights(iterations, config.gamma);
  std::vector<NodeId> terms;
  for (int v = 0; v < iterations; ++v) {
    for (std::size_t view = 0; view < preds.size(); ++view) {
      if (static_cast<int>(preds[view].iterates.size()) != iterations) {
        throw Error(ErrorCode::kShapeMismatch,
                    "refine loss: views disagree on iteration count");
      }
      RequireGroundTruth(gt[view]);
      const NodeId residual = NormalizedResidual(
          graph, preds[view].iterates[v], preds[view].valid, gt[view]);
      const NodeId mean = graph.MaskedMean(
          residual, JointMask(preds[view].valid, gt[view].mask()));
      terms.push_back(graph.Affine(mean, weights[v], 0.0));
    }
  }
  return AddTerms(graph, terms);
}

NodeId PairLoss(Graph& graph, const std::vector<ViewPrediction>& initial,
                const std::vector<NodeId>& confidence,
                const std::vector<Pointmap>& gt, const LossConfig& config) {
  config.Validate();
  if (initial.size() != gt.size() || confidence.size() != gt.size() ||
      gt.empty()) {
    throw Error(ErrorCode::kShapeMismatch,
                "pair loss: view counts of prediction, confidence and ground "
                "truth differ");
  }
  std::vector<NodeId> terms;
  for (std::size_t view = 0; view < gt.size(); ++view) {
    RequireGroundTruth(gt[view]);
    if (initial[view].iterates.size() != 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pair loss takes exactly one initial pointmap per view");
    }
    const NodeId residual = NormalizedResidual(
        graph, initial[view].iterates.front(), initial[view].valid, gt[view]);
    const NodeId w = confidence[view];
    const NodeId per_pixel =
        graph.Sub(graph.Mul(w, residual),
                  graph.Affine(graph.Log(w), config.alpha, 0.0));
    terms.push_back(graph.MaskedMean(
        per_pixel, JointMask(initial[view].valid, gt[view].mask())));
  }
  return AddTerms(graph, terms);
}

NodeId TotalLoss(Graph& graph, NodeId pair_term, NodeId refine_term) {
  return graph.Add(pair_term, refine_term);
}

double LossRefine(const std::vector<std::vector<Pointmap>>& preds,
                  const std::vector<Pointmap>& gt, const LossConfig& config) {
  Graph graph;
  std::vector<ViewPrediction> nodes;
  for (const auto& view : preds) {
    if (view.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "refine loss needs at least one iteration");
    }
    ViewPrediction p;
    p.valid = view.front().mask();
    for (const Pointmap& pm : view) {
      p.iterates.push_back(graph.Constant(pm.ToTensor()));
    }
    nodes.push_back(std::move(p));
  }
  return graph.value(RefineLoss(graph, nodes, gt, config)).item();
}

double LossPair(const std::vector<Pointmap>& initial,
                const std::vector<ConfidenceMap>& confidence,
                const std::vector<Pointmap>& gt, const LossConfig& config) {
  if (confidence.size() != initial.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "pair loss: confidence count differs from view count");
  }
  Graph graph;
  std::vector<ViewPrediction> nodes;
  std::vector<NodeId> weights;
  for (std::size_t view = 0; view < initial.size(); ++view) {
    const Pointmap& pm = initial[view];
    const ConfidenceMap& conf = confidence[view];
    if (conf.height() != pm.height() || conf.width() != pm.width()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "pair loss: confidence grid differs from pointmap grid");
    }
    // Pixels outside the valid set never contribute; give them a neutral
    // weight so the log stays defined.
    std::vector<double> w(conf.weights());
    for (std::size_t k = 0; k < w.size(); ++k) {
      const bool used = pm.valid(k) && gt.at(view).valid(k);
      if (!used) {
        w[k] = 1.0;
      } else if (!(w[k] > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "nonpositive confidence at pixel " + std::to_string(k) +
                        " of view " + std::to_string(view));
      }
    }
    nodes.push_back(
        ViewPrediction{{graph.Constant(pm.ToTensor())}, pm.mask()});
    weights.push_back(
        graph.Constant(Tensor({1, 1, pm.height(), pm.width()}, std::move(w))));
  }
  return graph.value(PairLoss(graph, nodes, weights, gt, config)).item();
}

double TotalLoss(double pair_term, double refine_term) {
  return pair_term + refine_term;
}

}  // namespace monoref
