#pragma once

// Relative pose accuracy (RRA / RTA / mAA over 1..30 degrees) and
// nearest-neighbour point-cloud accuracy / completeness.

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "monoref/geometry.h"
#include "monoref/pointmap.h"

namespace monoref {

// Per ordered pair (i < j) errors of the relative motion between cameras.
struct PoseErrors {
  std::vector<double> rotation_deg;
  std::vector<double> translation_deg;
};

// Poses are camera-to-world. The relative motion of pair (i, j) is
// E_j ∘ E_i^-1 on the world-to-camera extrinsics E = pose^-1, i.e. the map
// from camera i into camera j, which is unaffected by any change of world
// frame. Throws kInvalidArgument on length mismatch or fewer than 2 poses.
PoseErrors RelativePoseErrors(std::span<const RigidPose> pred,
                              std::span<const RigidPose> gt);

struct PoseAccuracy {
  std::vector<double> thresholds_deg;
  std::vector<double> rra;  // fraction with rotation error < tau
  std::vector<double> rta;  // fraction with translation angle < tau
};

PoseAccuracy ComputePoseAccuracy(const PoseErrors& errors,
                                 std::span<const double> thresholds_deg);
PoseAccuracy ComputePoseAccuracy(std::span<const RigidPose> pred,
                                 std::span<const RigidPose> gt,
                                 std::span<const double> thresholds_deg);

// Mean over tau = 1..30 of the fraction of pairs with
// max(rotation, translation) error strictly below tau degrees.
double Maa30(const PoseErrors& errors);
double Maa30(std::span<const RigidPose> pred, std::span<const RigidPose> gt);

struct CloudStats {
  double acc_mean = 0.0;
  double acc_median = 0.0;
  double comp_mean = 0.0;
  double comp_median = 0.0;
};

// Exact nearest-neighbour queries over a fixed 3-D point set.
class KdTree {
 public:
  explicit KdTree(PointList points);
  ~KdTree();
  KdTree(KdTree&&) noexcept;
  KdTree& operator=(KdTree&&) noexcept;

  std::size_t size() const { return points_.size(); }
  // Index of a nearest point and its Euclidean distance.
  std::pair<std::size_t, double> Nearest(const Vec3& query) const;

 private:
  struct Node;
  std::unique_ptr<Node> Build(std::vector<std::size_t>& ids, std::size_t lo,
                              std::size_t hi, int depth);
  void Search(const Node* node, const Vec3& query, std::size_t& best,
              double& best_sq) const;

  PointList points_;
  std::unique_ptr<Node> root_;
};

// Distance from each query to its nearest reference point.
std::vector<double> NearestDistances(std::span<const Vec3> queries,
                                     std::span<const Vec3> reference);

double Median(std::vector<double> values);

// Accuracy = pred -> gt nearest distances, completeness = gt -> pred.
// With `prealign`, pred is first mapped onto gt by a uniform-weight
// similarity fit on index-paired points, which requires equal sizes.
CloudStats CloudAccuracyCompleteness(std::span<const Vec3> pred,
                                     std::span<const Vec3> gt, bool prealign);

// Pointmap form: the clouds are the valid pixels; the optional similarity
// pre-alignment uses pixels valid in both maps as correspondences.
CloudStats CloudAccuracyCompleteness(const Pointmap& pred, const Pointmap& gt,
                                     bool prealign);

}  // namespace monoref
