#include "monoref/synth.h"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>

#include "monoref/error.h"
#include "monoref/random.h"
#include "monoref/refinement.h"

namespace monoref {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kPairEmbeddingSeed = 0x5041495246454154ULL;
constexpr std::uint64_t kMonoEmbeddingSeed = 0x4d4f4e4f46454154ULL;
constexpr std::size_t kPairNoiseChannels = 8;
constexpr std::size_t kMonoNoiseChannels = 4;

enum StreamTag : std::uint64_t {
  kSceneStream = 0,
  kPairStream = 10,
  kMonoStream = 20,
  kPairFeatureNoise = 30,
  kMonoFeatureNoise = 40,
};

struct Bump {
  double x, y, sigma, amplitude;
};

struct Surface {
  double depth = 3.0;
  double tilt_x = 0.0, tilt_y = 0.0;
  double sky_y = -10.0;  // hits above this height (smaller y) are sky
  std::vector<Bump> bumps;

  double Height(double x, double y) const {
    double z = depth + tilt_x * x + tilt_y * y;
    for (const Bump& b : bumps) {
      const double dx = x - b.x, dy = y - b.y;
      z += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
    }
    return z;
  }
};

struct Texture {
  std::array<Vec3, 3> freq1, freq2;
  std::array<double, 3> phase1, phase2;

  Vec3 Color(const Vec3& p) const {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
      c[ch] = 0.5 + 0.3 * std::sin(freq1[ch].dot(p) + phase1[ch]) +
              0.15 * std::sin(freq2[ch].dot(p) + phase2[ch]);
    }
    return c;
  }
};

Vec3 RandomUnit(Rng& rng) {
  Vec3 v(rng.Normal(), rng.Normal(), rng.Normal());
  while (v.norm() < 1e-6) v = Vec3(rng.Normal(), rng.Normal(), rng.Normal());
  return v.normalized();
}

Mat3 LookAt(const Vec3& center, const Vec3& target, double roll_rad) {
  const Vec3 forward = (target - center).normalized();
  const Vec3 down(0.0, 1.0, 0.0);
  const Vec3 x_axis = down.cross(forward).normalized();
  const Vec3 y_axis = forward.cross(x_axis);
  Mat3 r;
  r.col(0) = x_axis;
  r.col(1) = y_axis;
  r.col(2) = forward;
  return r * AxisAngleRotation(Vec3::UnitZ(), roll_rad);
}

// Smallest positive ray parameter hitting the surface, or a negative value.
double CastRay(const Surface& surface, const Vec3& origin, const Vec3& dir) {
  const auto gap = [&](double t) {
    const Vec3 p = origin + t * dir;
    return p.z() - surface.Height(p.x(), p.y());
  };
  constexpr double kStep = 0.02, kNear = 0.3, kFar = 15.0;
  double lo = kNear;
  double g_lo = gap(lo);
  if (g_lo >= 0.0) return -1.0;
  for (double hi = kNear + kStep; hi <= kFar; hi += kStep) {
    const double g_hi = gap(hi);
    if (g_hi >= 0.0) {
      for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) < 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    lo = hi;
    g_lo = g_hi;
  }
  return -1.0;
}

ViewData RenderView(const Surface& surface, const Texture& texture,
                    const RigidPose& pose, double focal, std::size_t height,
                    std::size_t width) {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  PointList local(height * width, Vec3::Zero());
  Mask valid(height, width, false);
  std::vector<Vec3> colors(height * width, Vec3(0.6, 0.8, 1.0));
  for (std::size_t row = 0; row < height; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      const std::size_t k = row * width + col;
      const Vec3 ray_local((static_cast<double>(col) - cx) / focal,
                           (static_cast<double>(row) - cy) / focal, 1.0);
      const double depth =
          CastRay(surface, pose.translation, pose.rotation * ray_local);
      if (depth <= 0.0) continue;
      const Vec3 p_local = depth * ray_local;
      const Vec3 p_world = pose(p_local);
      if (p_world.y() < surface.sky_y) continue;
      local[k] = p_local;
      valid.set(k, true);
      colors[k] = texture.Color(p_world);
    }
  }
  ViewData view;
  view.focal = focal;
  view.pose = pose;
  view.gt_local = Pointmap(height, width, local, valid);
  PointList world(height * width, Vec3::Zero());
  for (std::size_t k = 0; k < world.size(); ++k) {
    if (valid[k]) world[k] = pose(local[k]);
  }
  view.gt_world = Pointmap(height, width, std::move(world), valid);
  view.image = ImageGrid(height, width, std::move(colors));
  return view;
}

Tensor Embed(const std::vector<std::vector<double>>& inputs, const Mask& valid,
             std::size_t height, std::size_t width, std::size_t embed_channels,
             std::uint64_t embed_seed, std::size_t noise_channels,
             std::uint64_t noise_seed, std::size_t raw_channels) {
  // inputs[c][k]: per-pixel descriptors; the first raw_channels are also
  // copied through verbatim.
  const std::size_t plane = height * width;
  const std::size_t dims = inputs.size();
  Rng embed_rng(embed_seed);
  std::vector<std::vector<double>> matrix(embed_channels,
                                          std::vector<double>(dims + 1));
  for (auto& row : matrix) {
    for (double& v : row) v = embed_rng.Normal(0.0, 1.5);
  }
  Rng noise_rng(noise_seed);
  const std::size_t channels = raw_channels + embed_channels + noise_channels;
  std::vector<double> data(channels * plane, 0.0);
  for (std::size_t c = 0; c < raw_channels; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      data[c * plane + k] = valid[k] ? inputs[c][k] : 0.0;
    }
  }
  for (std::size_t e = 0; e < embed_channels; ++e) {
    double* out = data.data() + (raw_channels + e) * plane;
    for (std::size_t k = 0; k < plane; ++k) {
      if (!valid[k]) continue;
      double acc = matrix[e][dims];
      for (std::size_t d = 0; d < dims; ++d) acc += matrix[e][d] * inputs[d][k];
      out[k] = std::tanh(acc);
    }
  }
  for (std::size_t c = 0; c < noise_channels; ++c) {
    double* out = data.data() + (raw_channels + embed_channels + c) * plane;
    for (std::size_t k = 0; k < plane; ++k) {
      const double v = noise_rng.Normal(0.0, 0.5);
      out[k] = valid[k] ? v : 0.0;
    }
  }
  return Tensor({1, channels, height, width}, std::move(data));
}

}  // namespace

void NoiseSpec::Validate() const {
  for (double v : {pair_sigma, outlier_fraction, outlier_magnitude,
                   mono_log_scale_sigma, mono_rotation_deg, mono_translation,
                   mono_warp}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "noise magnitudes must be finite and nonnegative");
    }
  }
  if (outlier_fraction > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "outlier fraction must be <= 1");
  }
}

std::vector<double> DepthOf(const Pointmap& local) {
  std::vector<double> depth(local.pixels(), 0.0);
  for (std::size_t k = 0; k < depth.size(); ++k) {
    if (local.valid(k)) depth[k] = local[k].z();
  }
  return depth;
}

Pointmap Unproject(const std::vector<double>& depth, const Mask& valid,
                   std::size_t height, std::size_t width, double focal) {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  PointList points(height * width, Vec3::Zero());
  for (std::size_t row = 0; row < height; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      const std::size_t k = row * width + col;
      const Vec3 ray((static_cast<double>(col) - cx) / focal,
                     (static_cast<double>(row) - cy) / focal, 1.0);
      points[k] = depth[k] * ray;
    }
  }
  return Pointmap(height, width, std::move(points), valid);
}

SceneFixture MakeScene(std::uint64_t seed, std::size_t height,
                       std::size_t width, const NoiseSpec& noise) {
  if (height < 8 || width < 8) {
    throw Error(ErrorCode::kInvalidArgument,
                "scenes need H, W >= 8, got " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
  noise.Validate();
  Rng rng(MixSeed(seed, kSceneStream));

  Surface surface;
  surface.depth = rng.Uniform(2.5, 3.5);
  surface.tilt_x = rng.Uniform(-0.2, 0.2);
  surface.tilt_y = rng.Uniform(-0.2, 0.2);
  surface.sky_y = -surface.depth * rng.Uniform(0.3, 0.7);
  for (int i = 0; i < 4; ++i) {
    surface.bumps.push_back(Bump{rng.Uniform(-1.5, 1.5), rng.Uniform(-1.5, 1.5),
                                 rng.Uniform(0.3, 0.8), rng.Uniform(-0.4, 0.4)});
  }
  Texture texture;
  for (int ch = 0; ch < 3; ++ch) {
    texture.freq1[ch] = RandomUnit(rng) * rng.Uniform(2.0, 5.0);
    texture.freq2[ch] = RandomUnit(rng) * rng.Uniform(6.0, 12.0);
    texture.phase1[ch] = rng.Uniform(0.0, 2 * kPi);
    texture.phase2[ch] = rng.Uniform(0.0, 2 * kPi);
  }

  const double w = static_cast<double>(width);
  const double focal1 = w * rng.Uniform(0.9, 1.2);
  const double focal2 = w * rng.Uniform(0.9, 1.2);
  const double side = rng.Uniform() < 0.5 ? -1.0 : 1.0;
  const Vec3 center2(side * rng.Uniform(0.3, 0.8), rng.Uniform(-0.2, 0.2),
                     rng.Uniform(-0.3, 0.3));
  const Vec3 target(rng.Uniform(-0.3, 0.3), rng.Uniform(-0.2, 0.2),
                    surface.depth);
  const double roll = rng.Uniform(-5.0, 5.0) * kPi / 180.0;
  const RigidPose pose2{LookAt(center2, target, roll), center2};

  SceneFixture fixture;
  fixture.seed = seed;
  fixture.height = height;
  fixture.width = width;
  fixture.noise = noise;
  fixture.views[0] = RenderView(surface, texture, RigidPose::Identity(),
                                focal1, height, width);
  fixture.views[1] =
      RenderView(surface, texture, pose2, focal2, height, width);
  for (const ViewData& v : fixture.views) {
    if (v.gt_local.ValidCount() < 16) {
      throw Error(ErrorCode::kDegenerate,
                  "scene " + std::to_string(seed) +
                      " rendered fewer than 16 valid pixels");
    }
  }

  const PairPrediction pair = CorruptPair(fixture, noise);
  const std::array<Pointmap, 2> mono = CorruptMono(fixture, noise);
  for (int i = 0; i < 2; ++i) {
    ViewData& v = fixture.views[i];
    v.pair = pair.pointmaps[i];
    v.confidence = pair.confidence[i];
    v.mono = mono[i];
    v.pair_features =
        PairFeatures(v.pair, v.confidence, MixSeed(seed, kPairFeatureNoise + i));
    v.mono_features = MonoFeatures(v.mono, MixSeed(seed, kMonoFeatureNoise + i));
  }
  return fixture;
}

PairPrediction CorruptPair(const SceneFixture& fixture,
                           const NoiseSpec& noise) {
  noise.Validate();
  PairPrediction out;
  const std::size_t h = fixture.height, w = fixture.width;
  for (int i = 0; i < 2; ++i) {
    const ViewData& view = fixture.views[i];
    Rng rng(MixSeed(fixture.seed, kPairStream + i));
    const Vec3 camera_center = view.pose.translation;

    std::size_t top = 0, left = 0, patch_h = 0, patch_w = 0;
    if (noise.outlier_fraction > 0.0) {
      const double side = std::sqrt(noise.outlier_fraction);
      patch_h = std::min<std::size_t>(h, std::lround(side * h));
      patch_w = std::min<std::size_t>(w, std::lround(side * w));
      top = rng.Index(h - patch_h + 1);
      left = rng.Index(w - patch_w + 1);
    }
    const double sign = rng.Uniform() < 0.5 ? -1.0 : 1.0;
    const double reference =
        std::sqrt(3.0) * noise.pair_sigma + noise.outlier_magnitude;

    PointList points = view.gt_world.points();
    std::vector<double> confidence(h * w);
    for (std::size_t row = 0; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) {
        const std::size_t k = row * w + col;
        Vec3 error(rng.Normal(), rng.Normal(), rng.Normal());
        error *= noise.pair_sigma;
        const bool in_patch = row >= top && row < top + patch_h &&
                              col >= left && col < left + patch_w;
        if (in_patch && view.gt_world.valid(k)) {
          const double window =
              std::sin(kPi * (row - top + 0.5) / patch_h) *
              std::sin(kPi * (col - left + 0.5) / patch_w);
          const Vec3 ray = (points[k] - camera_center).normalized();
          error += sign * noise.outlier_magnitude * window * ray;
        }
        double raw = 2.0;
        if (reference > 0.0) raw -= 3.0 * error.norm() / reference;
        confidence[k] = 1.0 + std::exp(raw);
        if (view.gt_world.valid(k) && error.squaredNorm() > 0.0) {
          points[k] += error;
        }
      }
    }
    out.pointmaps[i] =
        Pointmap(h, w, std::move(points), view.gt_world.mask());
    out.confidence[i] = ConfidenceMap(h, w, std::move(confidence));
  }
  return out;
}

std::array<Pointmap, 2> CorruptMono(const SceneFixture& fixture,
                                    const NoiseSpec& noise) {
  noise.Validate();
  std::array<Pointmap, 2> out;
  const std::size_t h = fixture.height, w = fixture.width;
  for (int i = 0; i < 2; ++i) {
    const Pointmap& local = fixture.views[i].gt_local;
    Rng rng(MixSeed(fixture.seed, kMonoStream + i));
    const double log_scale = noise.mono_log_scale_sigma * rng.Normal();
    const Vec3 axis = RandomUnit(rng);
    const double angle = noise.mono_rotation_deg * rng.Normal() * kPi / 180.0;
    const Vec3 shift = noise.mono_translation *
                       Vec3(rng.Normal(), rng.Normal(), rng.Normal());
    const double k1 = rng.Uniform(0.5, 1.5), k2 = rng.Uniform(0.5, 1.5);
    const double p1 = rng.Uniform(0.0, 2 * kPi), p2 = rng.Uniform(0.0, 2 * kPi);

    PointList points = local.points();
    if (noise.mono_warp > 0.0) {
      for (std::size_t row = 0; row < h; ++row) {
        for (std::size_t col = 0; col < w; ++col) {
          const double phi = std::sin(kPi * k1 * (col + 0.5) / w + p1) *
                             std::cos(kPi * k2 * (row + 0.5) / h + p2);
          points[row * w + col] *= 1.0 + noise.mono_warp * phi;
        }
      }
    }
    Pointmap warped(h, w, std::move(points), local.mask());
    const bool moved =
        log_scale != 0.0 || angle != 0.0 || shift.squaredNorm() > 0.0;
    out[i] = moved ? warped.Transformed(
                         Sim3{std::exp(log_scale),
                              AxisAngleRotation(axis, angle), shift})
                   : std::move(warped);
  }
  return out;
}

Tensor PairFeatures(const Pointmap& pair, const ConfidenceMap& confidence,
                    std::uint64_t seed) {
  const std::size_t h = pair.height(), w = pair.width(), plane = h * w;
  const double z = NormFactor(pair);
  std::vector<std::vector<double>> inputs(4, std::vector<double>(plane, 0.0));
  for (std::size_t k = 0; k < plane; ++k) {
    for (int c = 0; c < 3; ++c) inputs[c][k] = pair[k][c] / z;
    inputs[3][k] = std::log1p(confidence[k]);
  }
  return Embed(inputs, pair.mask(), h, w,
               kPairFeatureChannels - 3 - kPairNoiseChannels,
               kPairEmbeddingSeed, kPairNoiseChannels, seed, 3);
}

Tensor MonoFeatures(const Pointmap& mono, std::uint64_t seed) {
  const std::size_t h = mono.height(), w = mono.width(), plane = h * w;
  const double z = NormFactor(mono);
  std::vector<std::vector<double>> inputs(6, std::vector<double>(plane, 0.0));
  const auto neighbour = [&](std::size_t row, std::size_t col, int dr,
                             int dc) -> const Vec3& {
    const long r = std::clamp<long>(static_cast<long>(row) + dr, 0,
                                    static_cast<long>(h) - 1);
    const long c = std::clamp<long>(static_cast<long>(col) + dc, 0,
                                    static_cast<long>(w) - 1);
    return mono.at(r, c);
  };
  for (std::size_t row = 0; row < h; ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      const std::size_t k = row * w + col;
      for (int c = 0; c < 3; ++c) inputs[c][k] = mono[k][c] / z;
      const Vec3 du = neighbour(row, col, 0, 1) - neighbour(row, col, 0, -1);
      const Vec3 dv = neighbour(row, col, 1, 0) - neighbour(row, col, -1, 0);
      const Vec3 n = du.cross(dv);
      const double len = n.norm();
      if (len > 0.0) {
        for (int c = 0; c < 3; ++c) inputs[3 + c][k] = n[c] / len;
      }
    }
  }
  const Tensor full = Embed(inputs, mono.mask(), h, w,
                            kMonoFeatureChannels - 6 - kMonoNoiseChannels,
                            kMonoEmbeddingSeed, kMonoNoiseChannels, seed, 6);
  const std::size_t low_h = std::max<std::size_t>(1, h / 2);
  const std::size_t low_w = std::max<std::size_t>(1, w / 2);
  return BilinearResize(BilinearResize(full, low_h, low_w), h, w);
}

}  // namespace monoref
