#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace monoref {

class Pointmap;
class ConfidenceMap;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointList = std::vector<Vec3>;

// Similarity transform in the canonical order p' = scale * R * p + t.
//
// The refinement literature often writes the same map as s * (R * p + t');
// the two parameterize the same group with t' = t / s (see ToScaledShift).
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Sim3 Identity() { return {}; }
  Vec3 operator()(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }
  // Shift t' of the s * (R * p + t') parameterization.
  Vec3 ToScaledShift() const { return translation / scale; }
  static Sim3 FromScaledShift(double scale, const Mat3& rotation,
                              const Vec3& shift);
};

// Camera-to-world rigid motion: x_world = R * x_cam + t.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose Identity() { return {}; }
  Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }
  RigidPose Inverse() const;
  // (this ∘ other)(p) = this(other(p)).
  RigidPose Compose(const RigidPose& other) const;
};

enum class UmeyamaMode { kSimilarity, kRigid };

// Weighted least-squares transform minimising
//   sum_i w_i || s R src_i + t - dst_i ||^2
// (s pinned to 1 in rigid mode). Throws kInvalidArgument on length mismatch,
// fewer than three points, negative weights or zero weight sum, and
// kDegenerate when the smallest singular value of the weighted
// cross-covariance is below 1e-12 of the largest.
Sim3 Umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
             std::span<const double> weights,
             UmeyamaMode mode = UmeyamaMode::kSimilarity);

// Weighted objective the estimator minimises; used by tests and reports.
double UmeyamaObjective(const Sim3& transform, std::span<const Vec3> src,
                        std::span<const Vec3> dst,
                        std::span<const double> weights);

PointList ApplySim3(const Sim3& transform, std::span<const Vec3> points);
// Compose(a, b) applies b first, then a.
Sim3 Sim3Compose(const Sim3& a, const Sim3& b);
Sim3 Sim3Inverse(const Sim3& transform);

Mat3 AxisAngleRotation(const Vec3& axis, double angle_rad);
bool IsRotation(const Mat3& r, double tol = 1e-9);

// Geodesic angle between two rotations, degrees in [0, 180].
double RotationGeodesicDeg(const Mat3& r1, const Mat3& r2);

// Angle between translation directions in degrees. When a norm is below
// 1e-9: both tiny -> 0, exactly one tiny -> 180.
double TranslationAngleDeg(const Vec3& t1, const Vec3& t2);

// Focal length (pixels) of a pointmap expressed in its own camera frame,
// principal point at the image centre ((W-1)/2, (H-1)/2). Iteratively
// reweighted (Weiszfeld) minimiser of
//   sum_k w_k || (u_k - cx, v_k - cy) - f * (x_k / z_k, y_k / z_k) ||.
// Needs at least 10 valid pixels with positive depth and weight.
double RecoverFocal(const Pointmap& local, const ConfidenceMap& weights);

// Rigid pose taking camera-2 coordinates into the view-1 frame, fitted over
// pixels valid in both maps.
RigidPose RecoverRelativePose(const Pointmap& world, const Pointmap& local,
                              const ConfidenceMap& weights);

}  // namespace monoref
