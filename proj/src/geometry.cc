#include "monoref/geometry.h"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "monoref/error.h"
#include "monoref/pointmap.h"

namespace monoref {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

Sim3 Sim3::FromScaledShift(double scale, const Mat3& rotation,
                           const Vec3& shift) {
  return Sim3{scale, rotation, scale * shift};
}

RigidPose RigidPose::Inverse() const {
  const Mat3 rt = rotation.transpose();
  return RigidPose{rt, -(rt * translation)};
}

RigidPose RigidPose::Compose(const RigidPose& other) const {
  return RigidPose{rotation * other.rotation,
                   rotation * other.translation + translation};
}

Sim3 Umeyama(std::span<const Vec3> src, std::span<const Vec3> dst,
             std::span<const double> weights, UmeyamaMode mode) {
  const std::size_t n = src.size();
  if (dst.size() != n || weights.size() != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "umeyama needs equal lengths, got src=" + std::to_string(n) +
                    " dst=" + std::to_string(dst.size()) +
                    " weights=" + std::to_string(weights.size()));
  }
  if (n < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "umeyama needs at least 3 correspondences, got " +
                    std::to_string(n));
  }
  double weight_sum = 0.0;
  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "umeyama weight " + std::to_string(i) +
                      " is negative or not finite");
    }
    weight_sum += w;
    src_mean += w * src[i];
    dst_mean += w * dst[i];
  }
  if (!(weight_sum > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "umeyama weights sum to zero");
  }
  src_mean /= weight_sum;
  dst_mean /= weight_sum;

  Mat3 covariance = Mat3::Zero();
  double src_variance = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const Vec3 s = src[i] - src_mean;
    const Vec3 d = dst[i] - dst_mean;
    covariance += w * d * s.transpose();
    src_variance += w * s.squaredNorm();
  }
  covariance /= weight_sum;
  src_variance /= weight_sum;

  const Eigen::JacobiSVD<Mat3> svd(covariance,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 singular = svd.singularValues();
  if (!(singular(0) > 0.0) || singular(2) < 1e-12 * singular(0)) {
    throw Error(ErrorCode::kDegenerate,
                "weighted cross-covariance is rank deficient (singular values " +
                    std::to_string(singular(0)) + ", " +
                    std::to_string(singular(1)) + ", " +
                    std::to_string(singular(2)) + ")");
  }
  Vec3 sign = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    sign(2) = -1.0;
  }

  Sim3 result;
  result.rotation =
      svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  result.scale = mode == UmeyamaMode::kSimilarity
                     ? singular.dot(sign) / src_variance
                     : 1.0;
  result.translation = dst_mean - result.scale * (result.rotation * src_mean);
  return result;
}

double UmeyamaObjective(const Sim3& transform, std::span<const Vec3> src,
                        std::span<const Vec3> dst,
                        std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    total += weights[i] * (transform(src[i]) - dst[i]).squaredNorm();
  }
  return total;
}

PointList ApplySim3(const Sim3& transform, std::span<const Vec3> points) {
  PointList out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(transform(p));
  return out;
}

Sim3 Sim3Compose(const Sim3& a, const Sim3& b) {
  // a(b(p)) = sa Ra (sb Rb p + tb) + ta
  return Sim3{a.scale * b.scale, a.rotation * b.rotation,
              a.scale * (a.rotation * b.translation) + a.translation};
}

Sim3 Sim3Inverse(const Sim3& transform) {
  const Mat3 rt = transform.rotation.transpose();
  const double inv_scale = 1.0 / transform.scale;
  return Sim3{inv_scale, rt, -inv_scale * (rt * transform.translation)};
}

Mat3 AxisAngleRotation(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

bool IsRotation(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

double RotationGeodesicDeg(const Mat3& r1, const Mat3& r2) {
  const Mat3 rel = r1.transpose() * r2;
  // atan2 of (sin, cos) keeps precision near 0 and 180 degrees where the
  // plain arccos of the trace loses digits.
  const Vec3 skew(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0),
                  rel(1, 0) - rel(0, 1));
  const double cos_angle = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double sin_angle = std::min(skew.norm() / 2.0, 1.0);
  return std::clamp(std::atan2(sin_angle, cos_angle) * kRadToDeg, 0.0, 180.0);
}

double TranslationAngleDeg(const Vec3& t1, const Vec3& t2) {
  const bool tiny1 = t1.norm() < 1e-9;
  const bool tiny2 = t2.norm() < 1e-9;
  if (tiny1 && tiny2) return 0.0;
  if (tiny1 || tiny2) return 180.0;
  const Vec3 a = t1.normalized();
  const Vec3 b = t2.normalized();
  return std::clamp(std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg, 0.0,
                    180.0);
}

double RecoverFocal(const Pointmap& local, const ConfidenceMap& weights) {
  if (weights.height() != local.height() || weights.width() != local.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "focal recovery: confidence map does not match pointmap");
  }
  const double cx = (static_cast<double>(local.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(local.height()) - 1.0) / 2.0;

  std::vector<Eigen::Vector2d> pixel, ray;
  std::vector<double> base;
  for (std::size_t row = 0; row < local.height(); ++row) {
    for (std::size_t col = 0; col < local.width(); ++col) {
      const std::size_t k = row * local.width() + col;
      const Vec3& p = local[k];
      if (!local.valid(k) || !(p.z() > 0.0) || !(weights[k] > 0.0)) continue;
      pixel.emplace_back(static_cast<double>(col) - cx,
                         static_cast<double>(row) - cy);
      ray.emplace_back(p.x() / p.z(), p.y() / p.z());
      base.push_back(weights[k]);
    }
  }
  if (pixel.size() < 10) {
    throw Error(ErrorCode::kInvalidArgument,
                "focal recovery needs >= 10 valid pixels with positive depth, "
                "got " + std::to_string(pixel.size()));
  }

  std::vector<double> irls = base;
  double focal = 0.0;
  constexpr int kMaxRounds = 100;
  for (int round = 0; round < kMaxRounds; ++round) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pixel.size(); ++i) {
      num += irls[i] * pixel[i].dot(ray[i]);
      den += irls[i] * ray[i].squaredNorm();
    }
    if (!(den > 0.0)) {
      throw Error(ErrorCode::kDegenerate,
                  "focal recovery: all rays on the optical axis");
    }
    const double next = num / den;
    const bool converged =
        round > 0 && std::abs(next - focal) <= 1e-12 * std::abs(next);
    focal = next;
    if (converged) break;
    for (std::size_t i = 0; i < pixel.size(); ++i) {
      const double residual = (pixel[i] - focal * ray[i]).norm();
      irls[i] = base[i] / std::max(residual, 1e-12);
    }
  }
  return focal;
}

RigidPose RecoverRelativePose(const Pointmap& world, const Pointmap& local,
                              const ConfidenceMap& weights) {
  if (world.height() != local.height() || world.width() != local.width() ||
      weights.height() != local.height() || weights.width() != local.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "relative pose: pointmap/confidence sizes differ");
  }
  PointList src, dst;
  std::vector<double> w;
  for (std::size_t k = 0; k < local.pixels(); ++k) {
    if (!world.valid(k) || !local.valid(k)) continue;
    src.push_back(local[k]);
    dst.push_back(world[k]);
    w.push_back(weights[k]);
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::kDegenerate,
                "relative pose needs >= 3 jointly valid pixels, got " +
                    std::to_string(src.size()));
  }
  const Sim3 fit = Umeyama(src, dst, w, UmeyamaMode::kRigid);
  return RigidPose{fit.rotation, fit.translation};
}

}  // namespace monoref
