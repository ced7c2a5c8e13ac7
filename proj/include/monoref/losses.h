#pragma once

// Scale-normalised regression losses for the pairwise branch (confidence
// aware) and for the refinement iterates (exponentially weighted towards
// the last iterate).

#include <vector>

#include "monoref/pointmap.h"
#include "monoref/tensor.h"

namespace monoref {

struct LossConfig {
  double gamma = 0.9;
  double alpha = 0.2;
  void Validate() const;  // 0 < gamma <= 1, alpha >= 0
};

// gamma^(N - v) for v = 1..N.
std::vector<double> IterationWeights(int iterations, double gamma);

// Predicted iterates of one view on a graph plus the validity they carry.
struct ViewPrediction {
  std::vector<NodeId> iterates;
  Mask valid;
};

// sum_v sum_views gamma^(N-v) * mean_k || P^v_k / z - Pgt_k / zgt ||
// with z the norm factor of the prediction (differentiable) and zgt that of
// the ground truth; the mean runs over pixels valid in both.
NodeId RefineLoss(Graph& graph, const std::vector<ViewPrediction>& preds,
                  const std::vector<Pointmap>& gt, const LossConfig& config);

// sum_views mean_k [ w_k || P0_k / z - Pgt_k / zgt || - alpha log w_k ].
// Confidence nodes are [1,1,H,W] and must be strictly positive everywhere.
NodeId PairLoss(Graph& graph, const std::vector<ViewPrediction>& initial,
                const std::vector<NodeId>& confidence,
                const std::vector<Pointmap>& gt, const LossConfig& config);

NodeId TotalLoss(Graph& graph, NodeId pair_term, NodeId refine_term);

// Value-level forms. preds[view][v-1] holds P^v.
double LossRefine(const std::vector<std::vector<Pointmap>>& preds,
                  const std::vector<Pointmap>& gt, const LossConfig& config);
double LossPair(const std::vector<Pointmap>& initial,
                const std::vector<ConfidenceMap>& confidence,
                const std::vector<Pointmap>& gt, const LossConfig& config);
double TotalLoss(double pair_term, double refine_term);

}  // namespace monoref
