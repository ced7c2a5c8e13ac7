#include "monoref/training.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>
#include <thread>

#include "monoref/error.h"
#include "monoref/random.h"

namespace monoref {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

std::vector<Tensor> CollectWeights(const RefineWeights& weights) {
  std::vector<Tensor> out;
  weights.Visit([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

PointList BothViews(const Pointmap& a, const Pointmap& b) {
  PointList out = a.ValidPoints();
  const PointList more = b.ValidPoints();
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

PoseErrors PoseErrorOf(const PreparedScene& scene, const Pointmap& world2) {
  const RigidPose estimate = RecoverRelativePose(
      world2, scene.gt_local_second, scene.inputs[1].confidence);
  const std::array<RigidPose, 2> pred{RigidPose::Identity(), estimate};
  const std::array<RigidPose, 2> gt{RigidPose::Identity(), scene.gt_pose_second};
  return RelativePoseErrors(pred, gt);
}

PoseErrors Concatenate(const std::vector<SceneEvaluation>& scenes,
                       bool refined) {
  PoseErrors all;
  for (const SceneEvaluation& s : scenes) {
    const PoseErrors& e = refined ? s.refined_pose : s.initial_pose;
    all.rotation_deg.insert(all.rotation_deg.end(), e.rotation_deg.begin(),
                            e.rotation_deg.end());
    all.translation_deg.insert(all.translation_deg.end(),
                               e.translation_deg.begin(),
                               e.translation_deg.end());
  }
  return all;
}

}  // namespace

void ParallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PreparedScene PrepareScene(const SceneFixture& fixture) {
  PreparedScene scene;
  scene.seed = fixture.seed;
  std::vector<Pointmap> initial, gt;
  std::vector<ConfidenceMap> confidence;
  for (int i = 0; i < 2; ++i) {
    const ViewData& view = fixture.views[i];
    const AlignedMono aligned =
        AlignMonoToPair(view.mono, view.pair, view.confidence);
    scene.mono_transform[i] = aligned.transform;
    scene.inputs[i] = RefineInputs{view.pair,          view.confidence,
                                   aligned.aligned,    view.mono_features,
                                   view.pair_features, view.image};
    scene.gt_world[i] = view.gt_world;
    initial.push_back(view.pair);
    confidence.push_back(view.confidence);
    gt.push_back(view.gt_world);
  }
  scene.gt_local_second = fixture.views[1].gt_local;
  scene.gt_pose_second = fixture.views[1].pose;
  scene.pair_loss = LossPair(initial, confidence, gt, LossConfig{});
  return scene;
}

std::vector<PreparedScene> MakeCorpus(std::uint64_t base_seed,
                                      std::size_t count, std::size_t height,
                                      std::size_t width, const NoiseSpec& noise,
                                      int threads) {
  std::vector<PreparedScene> scenes(count);
  ParallelFor(count, threads, [&](std::size_t i) {
    scenes[i] =
        PrepareScene(MakeScene(MixSeed(base_seed, i), height, width, noise));
  });
  return scenes;
}

void TrainConfig::Validate() const {
  refine.Validate();
  loss.Validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
  if (epochs < 0) {
    throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  }
  if (batch_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  }
}

SceneGradient ComputeSceneGradient(const PreparedScene& scene,
                                   const RefineWeights& weights,
                                   const LossConfig& loss) {
  Graph graph;
  const RefineParams params = RefineParams::Add(graph, weights, true);
  std::vector<ViewPrediction> preds;
  std::vector<Pointmap> gt;
  for (int i = 0; i < 2; ++i) {
    const RefineInputs& in = scene.inputs[i];
    const NodeId pair = graph.Constant(in.pair.ToTensor());
    RefineNodes nodes = RefineOnGraph(graph, pair, in, params, weights.config);
    preds.push_back(ViewPrediction{std::move(nodes.iterates), nodes.valid});
    gt.push_back(scene.gt_world[i]);
  }
  const NodeId total = RefineLoss(graph, preds, gt, loss);
  graph.Backward(total);
  SceneGradient out;
  out.refine_loss = graph.value(total).item();
  for (NodeId id : params.All()) out.grads.push_back(graph.grad(id));
  return out;
}

TrainResult TrainRefinement(const std::vector<PreparedScene>& scenes,
                            const TrainConfig& config) {
  config.Validate();
  if (scenes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "training needs at least 1 scene");
  }
  TrainResult result;
  result.weights = RefineWeights::Initialize(config.refine,
                                             MixSeed(config.seed, 0));
  std::vector<Tensor> params = CollectWeights(result.weights);
  std::vector<std::vector<double>> first(params.size()), second(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    first[p].assign(params[p].size(), 0.0);
    second[p].assign(params[p].size(), 0.0);
  }
  const double pair_mean =
      std::accumulate(scenes.begin(), scenes.end(), 0.0,
                      [](double acc, const PreparedScene& s) {
                        return acc + s.pair_loss;
                      }) /
      static_cast<double>(scenes.size());

  Rng order_rng(MixSeed(config.seed, 1));
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[order_rng.Index(i)]);
    }
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<SceneGradient> batch(end - begin);
      ParallelFor(batch.size(), config.threads, [&](std::size_t b) {
        batch[b] = ComputeSceneGradient(scenes[order[begin + b]],
                                        result.weights, config.loss);
      });
      const double inv = 1.0 / static_cast<double>(batch.size());
      ++step;
      for (std::size_t p = 0; p < params.size(); ++p) {
        std::vector<double> data(params[p].data().begin(),
                                 params[p].data().end());
        for (std::size_t k = 0; k < data.size(); ++k) {
          double g = 0.0;
          for (const SceneGradient& sg : batch) g += sg.grads[p][k];
          g *= inv;
          if (config.optimizer == OptimizerKind::kGradientDescent) {
            data[k] -= config.learning_rate * g;
            continue;
          }
          first[p][k] = kAdamBeta1 * first[p][k] + (1 - kAdamBeta1) * g;
          second[p][k] = kAdamBeta2 * second[p][k] + (1 - kAdamBeta2) * g * g;
          const double m_hat =
              first[p][k] / (1 - std::pow(kAdamBeta1, static_cast<double>(step)));
          const double v_hat = second[p][k] /
              (1 - std::pow(kAdamBeta2, static_cast<double>(step)));
          data[k] -= config.learning_rate * m_hat /
                     (std::sqrt(v_hat) + kAdamEpsilon);
        }
        params[p] = Tensor(params[p].shape(), std::move(data));
      }
      std::size_t p = 0;
      result.weights.VisitMutable(
          [&](const std::string&, Tensor& t) { t = params[p++]; });
      for (const SceneGradient& sg : batch) loss_sum += sg.refine_loss;
    }
    EpochLog log;
    log.epoch = epoch;
    log.refine_loss = loss_sum / static_cast<double>(scenes.size());
    log.total_loss = log.refine_loss + pair_mean;
    result.curve.push_back(log);
    if (config.on_epoch) config.on_epoch(log);
  }
  return result;
}

EvaluationSummary Evaluate(const std::vector<PreparedScene>& scenes,
                           const RefineWeights& weights, int threads) {
  if (scenes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "evaluation needs scenes");
  }
  EvaluationSummary summary;
  summary.scenes.resize(scenes.size());
  ParallelFor(scenes.size(), threads, [&](std::size_t s) {
    const PreparedScene& scene = scenes[s];
    SceneEvaluation& ev = summary.scenes[s];
    ev.seed = scene.seed;
    std::array<Pointmap, 2> refined;
    for (int i = 0; i < 2; ++i) {
      refined[i] = Refine(scene.inputs[i], weights).back();
      ev.initial_error += 0.5 * PointmapMeanError(scene.inputs[i].pair,
                                                  scene.gt_world[i]);
      ev.refined_error += 0.5 * PointmapMeanError(refined[i], scene.gt_world[i]);
    }
    ev.initial_pose = PoseErrorOf(scene, scene.inputs[1].pair);
    ev.refined_pose = PoseErrorOf(scene, refined[1]);
    const PointList gt = BothViews(scene.gt_world[0], scene.gt_world[1]);
    ev.initial_cloud = CloudAccuracyCompleteness(
        BothViews(scene.inputs[0].pair, scene.inputs[1].pair), gt, false);
    ev.refined_cloud = CloudAccuracyCompleteness(
        BothViews(refined[0], refined[1]), gt, false);
  });
  for (const SceneEvaluation& ev : summary.scenes) {
    summary.mean_initial_error += ev.initial_error;
    summary.mean_refined_error += ev.refined_error;
  }
  summary.mean_initial_error /= static_cast<double>(scenes.size());
  summary.mean_refined_error /= static_cast<double>(scenes.size());
  summary.maa_initial = Maa30(Concatenate(summary.scenes, false));
  summary.maa_refined = Maa30(Concatenate(summary.scenes, true));
  return summary;
}

}  // namespace monoref
