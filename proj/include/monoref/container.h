#pragma once

// PMZ1 named-record container, PLY export and metric reports.
//
// Layout (all integers little-endian):
//   "PMZ1"                      4 bytes
//   u32 record_count
//   per record, in table order:
//     u32 name_len, name bytes (utf-8)
//     u8  dtype                 0 = f64, 1 = f32, 2 = u8
//     u32 rank, rank x u32 dims
//     u64 byte_offset           relative to the start of the payload
//   payload                     records concatenated in table order,
//                               row-major, no padding

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "monoref/geometry.h"
#include "monoref/metrics.h"
#include "monoref/pointmap.h"
#include "monoref/refinement.h"
#include "monoref/synth.h"
#include "monoref/tensor.h"

namespace monoref {

enum class DType : std::uint8_t { kF64 = 0, kF32 = 1, kU8 = 2 };

std::size_t DTypeSize(DType dtype);

struct Record {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> bytes;  // little-endian element data

  std::size_t ElementCount() const;

  static Record F64(std::string name, std::vector<std::uint32_t> shape,
                    std::span<const double> values);
  static Record F32(std::string name, std::vector<std::uint32_t> shape,
                    std::span<const float> values);
  static Record U8(std::string name, std::vector<std::uint32_t> shape,
                   std::vector<std::uint8_t> values);
  static Record FromTensor(std::string name, const Tensor& tensor);

  // Element values widened to double (any dtype).
  std::vector<double> AsDoubles() const;
  Tensor ToTensor() const;

  bool operator==(const Record&) const = default;
};

std::vector<std::uint8_t> EncodeContainer(const std::vector<Record>& records);
// Throws kMagicMismatch, kTruncated (naming the record), kDuplicateRecord,
// kUnknownDtype or kMalformed.
std::vector<Record> DecodeContainer(std::span<const std::uint8_t> bytes);

void SaveContainer(const std::filesystem::path& path,
                   const std::vector<Record>& records);
std::vector<Record> LoadContainer(const std::filesystem::path& path);

// kMissingRecord when absent.
const Record& FindRecord(const std::vector<Record>& records,
                         const std::string& name);
bool HasRecord(const std::vector<Record>& records, const std::string& name);

// Typed helpers. A pointmap `p` is stored as `p.points` (f64 [H,W,3]) and
// `p.valid` (u8 [H,W]); poses as f64 [3,4] = [R | t].
void AppendPointmap(std::vector<Record>& records, const std::string& name,
                    const Pointmap& pm);
Pointmap ReadPointmap(const std::vector<Record>& records,
                      const std::string& name);
void AppendConfidence(std::vector<Record>& records, const std::string& name,
                      const ConfidenceMap& conf);
ConfidenceMap ReadConfidence(const std::vector<Record>& records,
                             const std::string& name);
void AppendImage(std::vector<Record>& records, const std::string& name,
                 const ImageGrid& image);
ImageGrid ReadImage(const std::vector<Record>& records,
                    const std::string& name);
void AppendPose(std::vector<Record>& records, const std::string& name,
                const RigidPose& pose);
RigidPose ReadPose(const std::vector<Record>& records, const std::string& name);

// Weights are stored under `prefix` + parameter name, plus `prefix` +
// "config" (f64: iterations, hidden, cond, kernel, mono, pair channels,
// offset gain).
void AppendWeights(std::vector<Record>& records, const RefineWeights& weights,
                   const std::string& prefix = "weights/");
RefineWeights ReadWeights(const std::vector<Record>& records,
                          const std::string& prefix = "weights/");

// Fixture records live under `prefix` ("scene0/" etc.): view<i>/{image,
// gt_local, gt_world, pose, focal, pair, confidence, mono, pair_features,
// mono_features}, plus seed (u8[8]), size (f64 [2]) and noise (f64 [7]).
void AppendFixture(std::vector<Record>& records, const SceneFixture& fixture,
                   const std::string& prefix);
SceneFixture ReadFixture(const std::vector<Record>& records,
                         const std::string& prefix);

// ASCII PLY of the valid pixels with 8-bit colours.
void ExportPly(const Pointmap& pm, const ImageGrid& colors,
               const std::filesystem::path& path);

struct SceneMetrics {
  std::string label;
  double rra5 = 0, rra10 = 0, rra15 = 0;
  double rta5 = 0, rta10 = 0, rta15 = 0;
  double maa30 = 0;
  double acc_mean = 0, acc_median = 0, comp_mean = 0, comp_median = 0;
};

SceneMetrics PoseMetrics(std::string label, const PoseErrors& errors);

struct MetricReport {
  std::string command;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  bool has_pose = false;
  bool has_cloud = false;
  std::vector<SceneMetrics> scenes;
  SceneMetrics aggregate;

  // Sets `aggregate` to the field-wise mean over scenes.
  void Finalize();
  std::string ToJson() const;
  std::string ToTable() const;
  static MetricReport FromJson(const std::string& text);
};

}  // namespace monoref
