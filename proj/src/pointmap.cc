#include "monoref/pointmap.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "monoref/error.h"

namespace monoref {
namespace {

void RequireSameGrid(std::size_t h1, std::size_t w1, std::size_t h2,
                     std::size_t w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": " + std::to_string(h1) + "x" +
                    std::to_string(w1) + " vs " + std::to_string(h2) + "x" +
                    std::to_string(w2));
  }
}

}  // namespace

std::size_t Mask::Count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

Pointmap::Pointmap(std::size_t height, std::size_t width)
    : height_(height),
      width_(width),
      points_(height * width, Vec3::Zero()),
      valid_(height, width, true) {}

Pointmap::Pointmap(std::size_t height, std::size_t width, PointList points,
                   Mask valid)
    : height_(height),
      width_(width),
      points_(std::move(points)),
      valid_(std::move(valid)) {
  if (points_.size() != height * width) {
    throw Error(ErrorCode::kShapeMismatch,
                "pointmap has " + std::to_string(points_.size()) +
                    " points for a " + std::to_string(height) + "x" +
                    std::to_string(width) + " grid");
  }
  RequireSameGrid(height, width, valid_.height(), valid_.width(),
                  "pointmap validity mask");
  for (std::size_t k = 0; k < points_.size(); ++k) {
    if (!valid_[k]) {
      points_[k].setZero();
    } else if (!points_[k].allFinite()) {
      throw Error(ErrorCode::kNonFinite,
                  "pointmap pixel " + std::to_string(k) + " is not finite");
    }
  }
}

PointList Pointmap::ValidPoints() const {
  PointList out;
  out.reserve(ValidCount());
  for (std::size_t k = 0; k < points_.size(); ++k) {
    if (valid_[k]) out.push_back(points_[k]);
  }
  return out;
}

Tensor Pointmap::ToTensor() const {
  const std::size_t plane = pixels();
  std::vector<double> data(3 * plane);
  for (std::size_t k = 0; k < plane; ++k) {
    for (int c = 0; c < 3; ++c) data[c * plane + k] = points_[k][c];
  }
  return Tensor({1, 3, height_, width_}, std::move(data));
}

Tensor Pointmap::MaskTensor() const {
  std::vector<double> data(pixels());
  for (std::size_t k = 0; k < pixels(); ++k) data[k] = valid_[k] ? 1.0 : 0.0;
  return Tensor({1, 1, height_, width_}, std::move(data));
}

Pointmap Pointmap::FromTensor(const Tensor& t, const Mask& valid) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "pointmap tensor must be [1,3,H,W], got " +
                    ShapeString(t.shape()));
  }
  const std::size_t h = t.dim(2), w = t.dim(3), plane = h * w;
  PointList points(plane);
  for (std::size_t k = 0; k < plane; ++k) {
    points[k] = Vec3(t[k], t[plane + k], t[2 * plane + k]);
  }
  return Pointmap(h, w, std::move(points), valid);
}

Pointmap Pointmap::Scaled(double factor) const {
  PointList points = points_;
  for (Vec3& p : points) p *= factor;
  return Pointmap(height_, width_, std::move(points), valid_);
}

Pointmap Pointmap::Transformed(const Sim3& transform) const {
  PointList points = points_;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (valid_[k]) points[k] = transform(points[k]);
  }
  return Pointmap(height_, width_, std::move(points), valid_);
}

ConfidenceMap::ConfidenceMap(std::size_t height, std::size_t width,
                             double value)
    : ConfidenceMap(height, width,
                    std::vector<double>(height * width, value)) {}

ConfidenceMap::ConfidenceMap(std::size_t height, std::size_t width,
                             std::vector<double> weights)
    : height_(height), width_(width), weights_(std::move(weights)) {
  if (weights_.size() != height * width) {
    throw Error(ErrorCode::kShapeMismatch,
                "confidence map has " + std::to_string(weights_.size()) +
                    " entries for a " + std::to_string(height) + "x" +
                    std::to_string(width) + " grid");
  }
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (!std::isfinite(weights_[k])) {
      throw Error(ErrorCode::kNonFinite,
                  "confidence entry " + std::to_string(k) + " is not finite");
    }
    if (weights_[k] < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "confidence entry " + std::to_string(k) + " is negative");
    }
  }
}

Tensor ConfidenceMap::ToTensor() const {
  return Tensor({1, 1, height_, width_}, weights_);
}

ImageGrid::ImageGrid(std::size_t height, std::size_t width,
                     std::vector<Vec3> colors)
    : height_(height), width_(width), colors_(std::move(colors)) {
  if (colors_.size() != height * width) {
    throw Error(ErrorCode::kShapeMismatch,
                "image has " + std::to_string(colors_.size()) +
                    " pixels for a " + std::to_string(height) + "x" +
                    std::to_string(width) + " grid");
  }
  for (std::size_t k = 0; k < colors_.size(); ++k) {
    const Vec3& c = colors_[k];
    if (!c.allFinite() || c.minCoeff() < 0.0 || c.maxCoeff() > 1.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "image pixel " + std::to_string(k) + " outside [0,1]");
    }
  }
}

Tensor ImageGrid::ToTensor() const {
  const std::size_t plane = colors_.size();
  std::vector<double> data(3 * plane);
  for (std::size_t k = 0; k < plane; ++k) {
    for (int c = 0; c < 3; ++c) data[c * plane + k] = colors_[k][c];
  }
  return Tensor({1, 3, height_, width_}, std::move(data));
}

Pointmap MaskInvalid(const Pointmap& pm, const Mask& validity) {
  RequireSameGrid(pm.height(), pm.width(), validity.height(), validity.width(),
                  "mask_invalid");
  Mask combined(pm.height(), pm.width(), false);
  for (std::size_t k = 0; k < pm.pixels(); ++k) {
    combined.set(k, pm.valid(k) && validity[k]);
  }
  return Pointmap(pm.height(), pm.width(), pm.points(), std::move(combined));
}

double NormFactor(const Pointmap& pm) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < pm.pixels(); ++k) {
    if (!pm.valid(k)) continue;
    total += pm[k].norm();
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "norm factor of a pointmap with no valid pixels");
  }
  if (total == 0.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "norm factor is zero: every valid point is the origin");
  }
  return total / static_cast<double>(count);
}

double PointmapRms(const Pointmap& a, const Pointmap& b) {
  RequireSameGrid(a.height(), a.width(), b.height(), b.width(), "rms");
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.pixels(); ++k) {
    if (!a.valid(k) || !b.valid(k)) continue;
    sq += (a[k] - b[k]).squaredNorm();
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorCode::kInvalidArgument, "rms over zero valid pixels");
  }
  return std::sqrt(sq / (3.0 * static_cast<double>(count)));
}

double PointmapMeanError(const Pointmap& a, const Pointmap& b) {
  RequireSameGrid(a.height(), a.width(), b.height(), b.width(), "mean error");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.pixels(); ++k) {
    if (!a.valid(k) || !b.valid(k)) continue;
    total += (a[k] - b[k]).norm();
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "mean error over zero valid pixels");
  }
  return total / static_cast<double>(count);
}

AlignedMono AlignMonoToPair(const Pointmap& mono, const Pointmap& pair,
                            const ConfidenceMap& confidence) {
  RequireSameGrid(mono.height(), mono.width(), pair.height(), pair.width(),
                  "mono/pair alignment");
  RequireSameGrid(mono.height(), mono.width(), confidence.height(),
                  confidence.width(), "alignment confidence");
  PointList src, dst;
  std::vector<double> weights;
  for (std::size_t k = 0; k < mono.pixels(); ++k) {
    if (!mono.valid(k) || !pair.valid(k) || !(confidence[k] > 0.0)) continue;
    src.push_back(mono[k]);
    dst.push_back(pair[k]);
    weights.push_back(confidence[k]);
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::kDegenerate,
                "alignment needs >= 3 jointly valid weighted pixels, got " +
                    std::to_string(src.size()));
  }
  const Sim3 transform =
      Umeyama(src, dst, weights, UmeyamaMode::kSimilarity);
  return AlignedMono{mono.Transformed(transform), transform};
}

}  // namespace monoref
