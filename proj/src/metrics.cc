#include "monoref/metrics.h"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "monoref/error.h"

namespace monoref {
namespace {

void RequirePairedPoses(std::span<const RigidPose> pred,
                        std::span<const RigidPose> gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "pose lists differ in length: " + std::to_string(pred.size()) +
                    " vs " + std::to_string(gt.size()));
  }
  if (pred.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "pose accuracy needs at least 2 poses");
  }
}

RigidPose Relative(const RigidPose& cam_i, const RigidPose& cam_j) {
  // E_j ∘ E_i^-1 with E = cam^-1 equals cam_j^-1 ∘ cam_i.
  return cam_j.Inverse().Compose(cam_i);
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

}  // namespace

PoseErrors RelativePoseErrors(std::span<const RigidPose> pred,
                              std::span<const RigidPose> gt) {
  RequirePairedPoses(pred, gt);
  PoseErrors errors;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const RigidPose rel_pred = Relative(pred[i], pred[j]);
      const RigidPose rel_gt = Relative(gt[i], gt[j]);
      errors.rotation_deg.push_back(
          RotationGeodesicDeg(rel_pred.rotation, rel_gt.rotation));
      errors.translation_deg.push_back(
          TranslationAngleDeg(rel_pred.translation, rel_gt.translation));
    }
  }
  return errors;
}

PoseAccuracy ComputePoseAccuracy(const PoseErrors& errors,
                                 std::span<const double> thresholds_deg) {
  PoseAccuracy acc;
  const double pairs = static_cast<double>(errors.rotation_deg.size());
  for (double tau : thresholds_deg) {
    const auto below = [tau](double e) { return e < tau; };
    acc.thresholds_deg.push_back(tau);
    acc.rra.push_back(static_cast<double>(std::count_if(
                          errors.rotation_deg.begin(),
                          errors.rotation_deg.end(), below)) /
                      pairs);
    acc.rta.push_back(static_cast<double>(std::count_if(
                          errors.translation_deg.begin(),
                          errors.translation_deg.end(), below)) /
                      pairs);
  }
  return acc;
}

PoseAccuracy ComputePoseAccuracy(std::span<const RigidPose> pred,
                                 std::span<const RigidPose> gt,
                                 std::span<const double> thresholds_deg) {
  return ComputePoseAccuracy(RelativePoseErrors(pred, gt), thresholds_deg);
}

double Maa30(const PoseErrors& errors) {
  const std::size_t pairs = errors.rotation_deg.size();
  if (pairs == 0) {
    throw Error(ErrorCode::kInvalidArgument, "mAA over zero pose pairs");
  }
  double total = 0.0;
  for (int tau = 1; tau <= 30; ++tau) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < pairs; ++p) {
      const double worst =
          std::max(errors.rotation_deg[p], errors.translation_deg[p]);
      if (worst < tau) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(pairs);
  }
  return total / 30.0;
}

double Maa30(std::span<const RigidPose> pred, std::span<const RigidPose> gt) {
  return Maa30(RelativePoseErrors(pred, gt));
}

// ---------------------------------------------------------------------------

struct KdTree::Node {
  std::size_t index;
  int axis;
  std::unique_ptr<Node> left, right;
};

KdTree::KdTree(PointList points) : points_(std::move(points)) {
  if (points_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "kd-tree over an empty cloud");
  }
  std::vector<std::size_t> ids(points_.size());
  std::iota(ids.begin(), ids.end(), 0);
  root_ = Build(ids, 0, ids.size(), 0);
}

KdTree::~KdTree() = default;
KdTree::KdTree(KdTree&&) noexcept = default;
KdTree& KdTree::operator=(KdTree&&) noexcept = default;

std::unique_ptr<KdTree::Node> KdTree::Build(std::vector<std::size_t>& ids,
                                            std::size_t lo, std::size_t hi,
                                            int depth) {
  if (lo >= hi) return nullptr;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(ids.begin() + lo, ids.begin() + mid, ids.begin() + hi,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis] ||
                            (points_[a][axis] == points_[b][axis] && a < b);
                   });
  auto node = std::make_unique<Node>();
  node->index = ids[mid];
  node->axis = axis;
  node->left = Build(ids, lo, mid, depth + 1);
  node->right = Build(ids, mid + 1, hi, depth + 1);
  return node;
}

void KdTree::Search(const Node* node, const Vec3& query, std::size_t& best,
                    double& best_sq) const {
  if (node == nullptr) return;
  const Vec3& p = points_[node->index];
  const double sq = (query - p).squaredNorm();
  if (sq < best_sq || (sq == best_sq && node->index < best)) {
    best_sq = sq;
    best = node->index;
  }
  const double delta = query[node->axis] - p[node->axis];
  const Node* near = delta < 0.0 ? node->left.get() : node->right.get();
  const Node* far = delta < 0.0 ? node->right.get() : node->left.get();
  Search(near, query, best, best_sq);
  if (delta * delta <= best_sq) Search(far, query, best, best_sq);
}

std::pair<std::size_t, double> KdTree::Nearest(const Vec3& query) const {
  std::size_t best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  Search(root_.get(), query, best, best_sq);
  return {best, (query - points_[best]).norm()};
}

std::vector<double> NearestDistances(std::span<const Vec3> queries,
                                     std::span<const Vec3> reference) {
  const KdTree tree(PointList(reference.begin(), reference.end()));
  std::vector<double> out;
  out.reserve(queries.size());
  for (const Vec3& q : queries) out.push_back(tree.Nearest(q).second);
  return out;
}

double Median(std::vector<double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "median of an empty list");
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CloudStats CloudAccuracyCompleteness(std::span<const Vec3> pred,
                                     std::span<const Vec3> gt, bool prealign) {
  if (pred.empty() || gt.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "cloud metrics need nonempty clouds");
  }
  PointList aligned(pred.begin(), pred.end());
  if (prealign) {
    if (pred.size() != gt.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "index-paired pre-alignment needs equal cloud sizes; use "
                  "the pointmap overload for pixel correspondences");
    }
    const std::vector<double> uniform(pred.size(), 1.0);
    aligned = ApplySim3(Umeyama(pred, gt, uniform, UmeyamaMode::kSimilarity),
                        pred);
  }
  const std::vector<double> acc = NearestDistances(aligned, gt);
  const std::vector<double> comp = NearestDistances(gt, aligned);
  return CloudStats{Mean(acc), Median(acc), Mean(comp), Median(comp)};
}

CloudStats CloudAccuracyCompleteness(const Pointmap& pred, const Pointmap& gt,
                                     bool prealign) {
  const PointList pred_points = pred.ValidPoints();
  const PointList gt_points = gt.ValidPoints();
  if (pred_points.empty() || gt_points.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "cloud metrics need nonempty clouds");
  }
  if (!prealign) {
    return CloudAccuracyCompleteness(pred_points, gt_points, false);
  }
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "pixel-correspondence alignment needs equal grids");
  }
  PointList src, dst;
  for (std::size_t k = 0; k < pred.pixels(); ++k) {
    if (pred.valid(k) && gt.valid(k)) {
      src.push_back(pred[k]);
      dst.push_back(gt[k]);
    }
  }
  const std::vector<double> uniform(src.size(), 1.0);
  const Sim3 fit = Umeyama(src, dst, uniform, UmeyamaMode::kSimilarity);
  const PointList aligned = ApplySim3(fit, pred_points);
  return CloudAccuracyCompleteness(aligned, gt_points, false);
}

}  // namespace monoref
