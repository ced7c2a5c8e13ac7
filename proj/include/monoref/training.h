#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "monoref/geometry.h"
#include "monoref/losses.h"
#include "monoref/metrics.h"
#include "monoref/refinement.h"
#include "monoref/synth.h"

namespace monoref {

// A fixture after the global mono alignment step, ready for the refiner.
struct PreparedScene {
  std::uint64_t seed = 0;
  std::array<RefineInputs, 2> inputs;
  std::array<Pointmap, 2> gt_world;
  Pointmap gt_local_second;    // view 2 in its own frame
  RigidPose gt_pose_second;    // camera 2 -> view-1 frame
  std::array<Sim3, 2> mono_transform;
  double pair_loss = 0.0;      // L_pair of the fixture's (P0, w0)
};

PreparedScene PrepareScene(const SceneFixture& fixture);

// Scene seeds are derived from `base_seed` and the scene index, so a corpus
// is reproducible and its prefix does not depend on `count`.
std::vector<PreparedScene> MakeCorpus(std::uint64_t base_seed,
                                      std::size_t count, std::size_t height,
                                      std::size_t width, const NoiseSpec& noise,
                                      int threads = 1);

enum class OptimizerKind { kGradientDescent, kAdam };

struct EpochLog {
  int epoch = 0;
  double refine_loss = 0.0;  // mean over scenes
  double total_loss = 0.0;   // refine + pair, mean over scenes
};

struct TrainConfig {
  RefineConfig refine;
  LossConfig loss;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 3e-4;
  int epochs = 10;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;  // weight initialisation and batch order
  int threads = 1;
  std::function<void(const EpochLog&)> on_epoch;

  void Validate() const;
};

struct TrainResult {
  RefineWeights weights;
  std::vector<EpochLog> curve;
};

// Mean refine loss of one scene together with its weight gradients, listed in
// RefineWeights::Visit order.
struct SceneGradient {
  double refine_loss = 0.0;
  std::vector<Tensor> grads;
};
SceneGradient ComputeSceneGradient(const PreparedScene& scene,
                                   const RefineWeights& weights,
                                   const LossConfig& loss);

TrainResult TrainRefinement(const std::vector<PreparedScene>& scenes,
                            const TrainConfig& config);

struct SceneEvaluation {
  std::uint64_t seed = 0;
  double initial_error = 0.0;  // mean valid-pixel distance, both views
  double refined_error = 0.0;
  PoseErrors initial_pose;
  PoseErrors refined_pose;
  CloudStats initial_cloud;
  CloudStats refined_cloud;
};

struct EvaluationSummary {
  std::vector<SceneEvaluation> scenes;
  double mean_initial_error = 0.0;
  double mean_refined_error = 0.0;
  double maa_initial = 0.0;
  double maa_refined = 0.0;
};

// Relative pose of view 2 is recovered from each predicted view-2 map against
// the ground-truth local map, weighted by w0; view 1 is the identity.
EvaluationSummary Evaluate(const std::vector<PreparedScene>& scenes,
                           const RefineWeights& weights, int threads = 1);

// Runs `fn(i)` for i in [0, count) on up to `threads` workers. Exceptions are
// rethrown on the caller, lowest index first.
void ParallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t)>& fn);

}  // namespace monoref
