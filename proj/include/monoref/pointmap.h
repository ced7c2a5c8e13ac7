#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "monoref/geometry.h"
#include "monoref/tensor.h"

namespace monoref {

// Boolean pixel mask, row-major H x W.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, bool value = true)
      : height_(height), width_(width), bits_(height * width, value) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t k) const { return bits_[k]; }
  void set(std::size_t k, bool v) { bits_[k] = v; }
  std::size_t Count() const;
  bool operator==(const Mask&) const = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<bool> bits_;
};

// H x W grid of 3-D points with per-pixel validity. Invalid pixels always
// hold exactly (0,0,0).
class Pointmap {
 public:
  Pointmap() = default;
  // All pixels valid, all points at the origin.
  Pointmap(std::size_t height, std::size_t width);
  // Points at invalid pixels are zeroed. Throws kShapeMismatch on size
  // mismatch and kNonFinite on non-finite valid entries.
  Pointmap(std::size_t height, std::size_t width, PointList points, Mask valid);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixels() const { return points_.size(); }
  const Vec3& operator[](std::size_t k) const { return points_[k]; }
  const Vec3& at(std::size_t row, std::size_t col) const {
    return points_[row * width_ + col];
  }
  bool valid(std::size_t k) const { return valid_[k]; }
  const Mask& mask() const { return valid_; }
  const PointList& points() const { return points_; }
  std::size_t ValidCount() const { return valid_.Count(); }

  // Valid points in pixel order.
  PointList ValidPoints() const;
  // [1,3,H,W] tensor of coordinates.
  Tensor ToTensor() const;
  // [1,1,H,W] tensor of 0/1 validity.
  Tensor MaskTensor() const;
  // Validity carried from `valid`; invalid pixels zeroed.
  static Pointmap FromTensor(const Tensor& t, const Mask& valid);

  Pointmap Scaled(double factor) const;
  Pointmap Transformed(const Sim3& transform) const;

  bool operator==(const Pointmap&) const = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  PointList points_;
  Mask valid_;
};

// H x W nonnegative finite weights.
class ConfidenceMap {
 public:
  ConfidenceMap() = default;
  ConfidenceMap(std::size_t height, std::size_t width, double value = 1.0);
  // Throws kInvalidArgument on negative entries, kNonFinite on NaN/Inf.
  ConfidenceMap(std::size_t height, std::size_t width,
                std::vector<double> weights);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double operator[](std::size_t k) const { return weights_[k]; }
  const std::vector<double>& weights() const { return weights_; }
  Tensor ToTensor() const;  // [1,1,H,W]

  bool operator==(const ConfidenceMap&) const = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<double> weights_;
};

// H x W RGB image with channels in [0, 1].
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(std::size_t height, std::size_t width, std::vector<Vec3> colors);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  const Vec3& operator[](std::size_t k) const { return colors_[k]; }
  const std::vector<Vec3>& colors() const { return colors_; }
  Tensor ToTensor() const;  // [1,3,H,W]

  bool operator==(const ImageGrid&) const = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<Vec3> colors_;
};

// Zeroes pixels where `validity` is false and intersects the flags.
Pointmap MaskInvalid(const Pointmap& pm, const Mask& validity);

// Mean Euclidean norm of the valid points. Throws kInvalidArgument when no
// pixel is valid or every valid point is the origin.
double NormFactor(const Pointmap& pm);

// Coordinate RMS over pixels valid in both maps:
//   sqrt(sum ||a - b||^2 / (3 * n)).
double PointmapRms(const Pointmap& a, const Pointmap& b);
// Mean Euclidean distance over pixels valid in both maps.
double PointmapMeanError(const Pointmap& a, const Pointmap& b);

struct AlignedMono {
  Pointmap aligned;
  Sim3 transform;  // mono -> pair frame
};

// Confidence-weighted similarity fit of a monocular pointmap onto the
// pairwise pointmap over jointly valid pixels. The output keeps the mono
// map's validity.
AlignedMono AlignMonoToPair(const Pointmap& mono, const Pointmap& pair,
                            const ConfidenceMap& confidence);

}  // namespace monoref
