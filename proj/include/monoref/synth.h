#pragma once

// Deterministic two-view scenes: a procedural height-field surface seen by
// two pinhole cameras, plus corruptions emulating what a pairwise regressor
// (noisy, with confidently wrong patches) and a monocular predictor (smooth
// but globally misaligned) would output.

#include <array>
#include <cstdint>

#include "monoref/geometry.h"
#include "monoref/pointmap.h"
#include "monoref/tensor.h"

namespace monoref {

struct NoiseSpec {
  double pair_sigma = 0.01;          // per-coordinate Gaussian std, scene units
  double outlier_fraction = 0.25;    // share of pixels in the bad patch
  double outlier_magnitude = 0.5;    // peak depth error on the patch
  double mono_log_scale_sigma = 0.3;
  double mono_rotation_deg = 15.0;
  double mono_translation = 0.5;
  double mono_warp = 0.01;           // relative smooth depth distortion

  static NoiseSpec Zero() { return NoiseSpec{0, 0, 0, 0, 0, 0, 0}; }
  // Only the global similarity perturbation of the mono map.
  static NoiseSpec Sim3Only() {
    NoiseSpec s = Zero();
    s.mono_log_scale_sigma = 0.3;
    s.mono_rotation_deg = 15.0;
    s.mono_translation = 0.5;
    return s;
  }
  void Validate() const;  // all fields >= 0, outlier fraction <= 1
};

struct ViewData {
  ImageGrid image;
  Pointmap gt_local;   // own camera frame
  Pointmap gt_world;   // view-1 frame
  RigidPose pose;      // camera-to-view-1
  double focal = 0.0;  // pixels; principal point at the grid centre

  Pointmap pair;             // corrupted pairwise prediction (view-1 frame)
  ConfidenceMap confidence;  // its confidence, >= 1
  Pointmap mono;             // corrupted monocular prediction (own frame)
  Tensor pair_features;      // [1, 128, H, W]
  Tensor mono_features;      // [1, 64, H, W]
};

struct SceneFixture {
  std::uint64_t seed = 0;
  std::size_t height = 0, width = 0;
  NoiseSpec noise;
  std::array<ViewData, 2> views;
};

struct PairPrediction {
  std::array<Pointmap, 2> pointmaps;
  std::array<ConfidenceMap, 2> confidence;
};

// Ground truth plus corruptions and features for `noise`. H, W >= 8.
SceneFixture MakeScene(std::uint64_t seed, std::size_t height,
                       std::size_t width, const NoiseSpec& noise = {});

PairPrediction CorruptPair(const SceneFixture& fixture, const NoiseSpec& noise);
std::array<Pointmap, 2> CorruptMono(const SceneFixture& fixture,
                                    const NoiseSpec& noise);

// Feature maps standing in for frozen backbones. Pair features are computed
// from the pairwise prediction and its confidence, mono features from the
// monocular prediction at half resolution and bilinearly upsampled. The
// embedding is fixed across scenes; only the trailing noise channels depend
// on `seed`.
Tensor PairFeatures(const Pointmap& pair, const ConfidenceMap& confidence,
                    std::uint64_t seed);
Tensor MonoFeatures(const Pointmap& mono, std::uint64_t seed);

// Depth map of a local pointmap (z per pixel, 0 where invalid).
std::vector<double> DepthOf(const Pointmap& local);
// Pinhole unprojection with principal point ((W-1)/2, (H-1)/2).
Pointmap Unproject(const std::vector<double>& depth, const Mask& valid,
                   std::size_t height, std::size_t width, double focal);

}  // namespace monoref
