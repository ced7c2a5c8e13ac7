#include "monoref/container.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "monoref/error.h"

namespace monoref {
namespace {

constexpr char kMagic[4] = {'P', 'M', 'Z', '1'};

class Writer {
 public:
  void U8(std::uint8_t v) { bytes_.push_back(v); }
  void U32(std::uint32_t v) { Little(v, 4); }
  void U64(std::uint64_t v) { Little(v, 8); }
  void Raw(std::span<const std::uint8_t> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
  }
  std::vector<std::uint8_t> Take() { return std::move(bytes_); }

 private:
  void Little(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back((v >> (8 * i)) & 0xffu);
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t Little(int n, const std::string& what) {
    Need(n, what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> Take(std::size_t n, const std::string& what) {
    Need(n, what);
    const auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t position() const { return pos_; }

 private:
  void Need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kTruncated, "header ends inside " + what);
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename Word, typename Value>
void PutLittle(std::vector<std::uint8_t>& out, Value v) {
  const Word bits = std::bit_cast<Word>(v);
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename Word>
Word GetLittle(const std::uint8_t* p) {
  Word bits = 0;
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    bits |= static_cast<Word>(p[i]) << (8 * i);
  }
  return bits;
}

DType CheckedDType(std::uint8_t raw, const std::string& name) {
  if (raw > 2) {
    throw Error(ErrorCode::kUnknownDtype,
                "record '" + name + "' declares dtype " + std::to_string(raw));
  }
  return static_cast<DType>(raw);
}

std::vector<std::uint32_t> Dims(std::initializer_list<std::size_t> dims) {
  std::vector<std::uint32_t> out;
  for (std::size_t d : dims) out.push_back(static_cast<std::uint32_t>(d));
  return out;
}

std::vector<double> ExpectShape(const std::vector<Record>& records,
                                const std::string& name,
                                const std::vector<std::uint32_t>& shape) {
  const Record& r = FindRecord(records, name);
  if (r.shape != shape) {
    std::string want, got;
    for (auto d : shape) want += std::to_string(d) + " ";
    for (auto d : r.shape) got += std::to_string(d) + " ";
    throw Error(ErrorCode::kShapeMismatch,
                "record '" + name + "' has shape [ " + got + "], expected [ " +
                    want + "]");
  }
  return r.AsDoubles();
}

std::pair<std::size_t, std::size_t> GridOf(const Record& r) {
  if (r.shape.size() < 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "record '" + r.name + "' is not an image grid");
  }
  return {r.shape[0], r.shape[1]};
}

std::uint8_t ColorByte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

using Json = nlohmann::ordered_json;

Json MetricsToJson(const SceneMetrics& m, bool pose, bool cloud) {
  Json j;
  j["label"] = m.label;
  if (pose) {
    j["rra@5"] = m.rra5;
    j["rra@10"] = m.rra10;
    j["rra@15"] = m.rra15;
    j["rta@5"] = m.rta5;
    j["rta@10"] = m.rta10;
    j["rta@15"] = m.rta15;
    j["maa30"] = m.maa30;
  }
  if (cloud) {
    j["acc_mean"] = m.acc_mean;
    j["acc_median"] = m.acc_median;
    j["comp_mean"] = m.comp_mean;
    j["comp_median"] = m.comp_median;
  }
  return j;
}

SceneMetrics MetricsFromJson(const Json& j) {
  SceneMetrics m;
  m.label = j.at("label").get<std::string>();
  const auto get = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  get("rra@5", m.rra5);
  get("rra@10", m.rra10);
  get("rra@15", m.rra15);
  get("rta@5", m.rta5);
  get("rta@10", m.rta10);
  get("rta@15", m.rta15);
  get("maa30", m.maa30);
  get("acc_mean", m.acc_mean);
  get("acc_median", m.acc_median);
  get("comp_mean", m.comp_mean);
  get("comp_median", m.comp_median);
  return m;
}

std::vector<std::pair<std::string, double SceneMetrics::*>> Columns(bool pose,
                                                                    bool cloud) {
  std::vector<std::pair<std::string, double SceneMetrics::*>> cols;
  if (pose) {
    cols.insert(cols.end(), {{"rra@5", &SceneMetrics::rra5},
                             {"rra@10", &SceneMetrics::rra10},
                             {"rra@15", &SceneMetrics::rra15},
                             {"rta@5", &SceneMetrics::rta5},
                             {"rta@10", &SceneMetrics::rta10},
                             {"rta@15", &SceneMetrics::rta15},
                             {"maa30", &SceneMetrics::maa30}});
  }
  if (cloud) {
    cols.insert(cols.end(), {{"acc_mean", &SceneMetrics::acc_mean},
                             {"acc_median", &SceneMetrics::acc_median},
                             {"comp_mean", &SceneMetrics::comp_mean},
                             {"comp_median", &SceneMetrics::comp_median}});
  }
  return cols;
}

}  // namespace

std::size_t DTypeSize(DType dtype) {
  switch (dtype) {
    case DType::kF64: return 8;
    case DType::kF32: return 4;
    case DType::kU8: return 1;
  }
  throw Error(ErrorCode::kUnknownDtype,
              "dtype " + std::to_string(static_cast<int>(dtype)));
}

std::size_t Record::ElementCount() const {
  std::size_t n = 1;
  for (std::uint32_t d : shape) n *= d;
  return n;
}

Record Record::F64(std::string name, std::vector<std::uint32_t> shape,
                   std::span<const double> values) {
  Record r{std::move(name), DType::kF64, std::move(shape), {}};
  if (r.ElementCount() != values.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "record '" + r.name + "': shape holds " +
                    std::to_string(r.ElementCount()) + " elements, got " +
                    std::to_string(values.size()));
  }
  r.bytes.reserve(values.size() * 8);
  for (double v : values) PutLittle<std::uint64_t>(r.bytes, v);
  return r;
}

Record Record::F32(std::string name, std::vector<std::uint32_t> shape,
                   std::span<const float> values) {
  Record r{std::move(name), DType::kF32, std::move(shape), {}};
  if (r.ElementCount() != values.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "record '" + r.name + "': element count mismatch");
  }
  r.bytes.reserve(values.size() * 4);
  for (float v : values) PutLittle<std::uint32_t>(r.bytes, v);
  return r;
}

Record Record::U8(std::string name, std::vector<std::uint32_t> shape,
                  std::vector<std::uint8_t> values) {
  Record r{std::move(name), DType::kU8, std::move(shape), std::move(values)};
  if (r.ElementCount() != r.bytes.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "record '" + r.name + "': element count mismatch");
  }
  return r;
}

Record Record::FromTensor(std::string name, const Tensor& tensor) {
  std::vector<std::uint32_t> shape;
  for (std::size_t d : tensor.shape()) {
    shape.push_back(static_cast<std::uint32_t>(d));
  }
  return F64(std::move(name), std::move(shape), tensor.data());
}

std::vector<double> Record::AsDoubles() const {
  const std::size_t n = ElementCount();
  if (bytes.size() != n * DTypeSize(dtype)) {
    throw Error(ErrorCode::kMalformed,
                "record '" + name + "' byte count disagrees with its shape");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::kF64:
        out[i] = std::bit_cast<double>(GetLittle<std::uint64_t>(&bytes[8 * i]));
        break;
      case DType::kF32:
        out[i] = std::bit_cast<float>(GetLittle<std::uint32_t>(&bytes[4 * i]));
        break;
      case DType::kU8:
        out[i] = bytes[i];
        break;
    }
  }
  return out;
}

Tensor Record::ToTensor() const {
  Shape s(shape.begin(), shape.end());
  return Tensor(std::move(s), AsDoubles());
}

std::vector<std::uint8_t> EncodeContainer(const std::vector<Record>& records) {
  std::set<std::string> names;
  Writer w;
  for (char c : kMagic) w.U8(static_cast<std::uint8_t>(c));
  w.U32(static_cast<std::uint32_t>(records.size()));
  std::uint64_t offset = 0;
  for (const Record& r : records) {
    if (!names.insert(r.name).second) {
      throw Error(ErrorCode::kDuplicateRecord, "record '" + r.name + "'");
    }
    if (r.bytes.size() != r.ElementCount() * DTypeSize(r.dtype)) {
      throw Error(ErrorCode::kMalformed,
                  "record '" + r.name + "' byte count disagrees with its shape");
    }
    w.U32(static_cast<std::uint32_t>(r.name.size()));
    w.Raw(std::span(reinterpret_cast<const std::uint8_t*>(r.name.data()),
                    r.name.size()));
    w.U8(static_cast<std::uint8_t>(r.dtype));
    w.U32(static_cast<std::uint32_t>(r.shape.size()));
    for (std::uint32_t d : r.shape) w.U32(d);
    w.U64(offset);
    offset += r.bytes.size();
  }
  for (const Record& r : records) w.Raw(r.bytes);
  return w.Take();
}

std::vector<Record> DecodeContainer(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    std::string seen;
    for (std::size_t i = 0; i < std::min<std::size_t>(4, bytes.size()); ++i) {
      const char c = static_cast<char>(bytes[i]);
      seen += std::isprint(static_cast<unsigned char>(c)) ? c : '?';
    }
    throw Error(ErrorCode::kMagicMismatch,
                "expected \"PMZ1\", found \"" + seen + "\"");
  }
  Reader in(bytes.subspan(4));
  const auto count = in.Little(4, "record count");
  struct Entry {
    Record record;
    std::uint64_t offset;
    std::uint64_t size;
  };
  std::vector<Entry> table;
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string label = "table entry " + std::to_string(i);
    const auto name_len = in.Little(4, label);
    const auto name_bytes = in.Take(name_len, label);
    Entry e;
    e.record.name.assign(name_bytes.begin(), name_bytes.end());
    const std::string where = "record '" + e.record.name + "'";
    if (!names.insert(e.record.name).second) {
      throw Error(ErrorCode::kDuplicateRecord, where);
    }
    e.record.dtype = CheckedDType(
        static_cast<std::uint8_t>(in.Little(1, where)), e.record.name);
    const auto rank = in.Little(4, where);
    for (std::uint64_t d = 0; d < rank; ++d) {
      e.record.shape.push_back(static_cast<std::uint32_t>(in.Little(4, where)));
    }
    e.offset = in.Little(8, where);
    e.size = e.record.ElementCount() * DTypeSize(e.record.dtype);
    table.push_back(std::move(e));
  }
  const auto payload = bytes.subspan(4 + in.position());
  std::uint64_t expected = 0;
  for (Entry& e : table) {
    if (e.offset != expected) {
      throw Error(ErrorCode::kMalformed,
                  "record '" + e.record.name + "' starts at payload offset " +
                      std::to_string(e.offset) + ", expected " +
                      std::to_string(expected) +
                      " (records must be contiguous and non-overlapping)");
    }
    if (e.offset + e.size > payload.size()) {
      throw Error(ErrorCode::kTruncated,
                  "record '" + e.record.name + "' needs " +
                      std::to_string(e.size) + " bytes at offset " +
                      std::to_string(e.offset) + ", payload has " +
                      std::to_string(payload.size()));
    }
    const auto data = payload.subspan(e.offset, e.size);
    e.record.bytes.assign(data.begin(), data.end());
    expected += e.size;
  }
  if (expected != payload.size()) {
    throw Error(ErrorCode::kMalformed,
                std::to_string(payload.size() - expected) +
                    " trailing payload bytes after the last record");
  }
  std::vector<Record> out;
  out.reserve(table.size());
  for (Entry& e : table) out.push_back(std::move(e.record));
  return out;
}

void SaveContainer(const std::filesystem::path& path,
                   const std::vector<Record>& records) {
  const std::vector<std::uint8_t> bytes = EncodeContainer(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: '" + path.string() + "'");
}

std::vector<Record> LoadContainer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return DecodeContainer(bytes);
}

const Record& FindRecord(const std::vector<Record>& records,
                         const std::string& name) {
  for (const Record& r : records) {
    if (r.name == name) return r;
  }
  throw Error(ErrorCode::kMissingRecord, "no record named '" + name + "'");
}

bool HasRecord(const std::vector<Record>& records, const std::string& name) {
  return std::any_of(records.begin(), records.end(),
                     [&](const Record& r) { return r.name == name; });
}

void AppendPointmap(std::vector<Record>& records, const std::string& name,
                    const Pointmap& pm) {
  std::vector<double> coords;
  coords.reserve(3 * pm.pixels());
  std::vector<std::uint8_t> valid(pm.pixels());
  for (std::size_t k = 0; k < pm.pixels(); ++k) {
    for (int c = 0; c < 3; ++c) coords.push_back(pm[k][c]);
    valid[k] = pm.valid(k) ? 1 : 0;
  }
  records.push_back(Record::F64(name + ".points",
                                Dims({pm.height(), pm.width(), 3}), coords));
  records.push_back(Record::U8(name + ".valid", Dims({pm.height(), pm.width()}),
                               std::move(valid)));
}

Pointmap ReadPointmap(const std::vector<Record>& records,
                      const std::string& name) {
  const Record& valid_rec = FindRecord(records, name + ".valid");
  const auto [h, w] = GridOf(valid_rec);
  const std::vector<double> coords =
      ExpectShape(records, name + ".points", Dims({h, w, 3}));
  const std::vector<double> flags =
      ExpectShape(records, name + ".valid", Dims({h, w}));
  PointList points(h * w);
  Mask mask(h, w, false);
  for (std::size_t k = 0; k < h * w; ++k) {
    points[k] = Vec3(coords[3 * k], coords[3 * k + 1], coords[3 * k + 2]);
    mask.set(k, flags[k] != 0.0);
  }
  return Pointmap(h, w, std::move(points), std::move(mask));
}

void AppendConfidence(std::vector<Record>& records, const std::string& name,
                      const ConfidenceMap& conf) {
  records.push_back(Record::F64(name, Dims({conf.height(), conf.width()}),
                                conf.weights()));
}

ConfidenceMap ReadConfidence(const std::vector<Record>& records,
                             const std::string& name) {
  const auto [h, w] = GridOf(FindRecord(records, name));
  return ConfidenceMap(h, w, ExpectShape(records, name, Dims({h, w})));
}

void AppendImage(std::vector<Record>& records, const std::string& name,
                 const ImageGrid& image) {
  std::vector<double> values;
  values.reserve(3 * image.colors().size());
  for (const Vec3& c : image.colors()) {
    values.insert(values.end(), {c.x(), c.y(), c.z()});
  }
  records.push_back(
      Record::F64(name, Dims({image.height(), image.width(), 3}), values));
}

ImageGrid ReadImage(const std::vector<Record>& records,
                    const std::string& name) {
  const auto [h, w] = GridOf(FindRecord(records, name));
  const std::vector<double> v = ExpectShape(records, name, Dims({h, w, 3}));
  std::vector<Vec3> colors(h * w);
  for (std::size_t k = 0; k < h * w; ++k) {
    colors[k] = Vec3(v[3 * k], v[3 * k + 1], v[3 * k + 2]);
  }
  return ImageGrid(h, w, std::move(colors));
}

void AppendPose(std::vector<Record>& records, const std::string& name,
                const RigidPose& pose) {
  std::vector<double> v;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v.push_back(pose.rotation(r, c));
    v.push_back(pose.translation[r]);
  }
  records.push_back(Record::F64(name, {3, 4}, v));
}

RigidPose ReadPose(const std::vector<Record>& records, const std::string& name) {
  const std::vector<double> v = ExpectShape(records, name, {3, 4});
  RigidPose pose;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = v[4 * r + c];
    pose.translation[r] = v[4 * r + 3];
  }
  if (!IsRotation(pose.rotation)) {
    throw Error(ErrorCode::kInvalidArgument,
                "record '" + name + "' does not hold a rotation");
  }
  return pose;
}

void AppendWeights(std::vector<Record>& records, const RefineWeights& weights,
                   const std::string& prefix) {
  const RefineConfig& c = weights.config;
  const std::vector<double> config{
      static_cast<double>(c.iterations),     static_cast<double>(c.hidden_channels),
      static_cast<double>(c.cond_channels),  static_cast<double>(c.kernel_size),
      static_cast<double>(c.mono_channels),  static_cast<double>(c.pair_channels),
      c.offset_gain};
  records.push_back(Record::F64(prefix + "config", {7}, config));
  weights.Visit([&](const std::string& name, const Tensor& t) {
    records.push_back(Record::FromTensor(prefix + name, t));
  });
}

RefineWeights ReadWeights(const std::vector<Record>& records,
                          const std::string& prefix) {
  const std::vector<double> c = ExpectShape(records, prefix + "config", {7});
  RefineConfig config;
  config.iterations = static_cast<int>(c[0]);
  config.hidden_channels = static_cast<std::size_t>(c[1]);
  config.cond_channels = static_cast<std::size_t>(c[2]);
  config.kernel_size = static_cast<std::size_t>(c[3]);
  config.mono_channels = static_cast<std::size_t>(c[4]);
  config.pair_channels = static_cast<std::size_t>(c[5]);
  config.offset_gain = c[6];
  RefineWeights weights = RefineWeights::Initialize(config, 0);
  weights.VisitMutable([&](const std::string& name, Tensor& t) {
    const Record& r = FindRecord(records, prefix + name);
    Tensor loaded = r.ToTensor();
    if (loaded.shape() != t.shape()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "weight '" + name + "' has shape " +
                      ShapeString(loaded.shape()) + ", config expects " +
                      ShapeString(t.shape()));
    }
    t = std::move(loaded);
  });
  return weights;
}

void AppendFixture(std::vector<Record>& records, const SceneFixture& fixture,
                   const std::string& prefix) {
  std::vector<std::uint8_t> seed(8);
  for (int i = 0; i < 8; ++i) seed[i] = (fixture.seed >> (8 * i)) & 0xffu;
  records.push_back(Record::U8(prefix + "seed", {8}, std::move(seed)));
  const std::vector<double> size{static_cast<double>(fixture.height),
                                 static_cast<double>(fixture.width)};
  records.push_back(Record::F64(prefix + "size", {2}, size));
  const NoiseSpec& n = fixture.noise;
  const std::vector<double> noise{n.pair_sigma,           n.outlier_fraction,
                                  n.outlier_magnitude,    n.mono_log_scale_sigma,
                                  n.mono_rotation_deg,    n.mono_translation,
                                  n.mono_warp};
  records.push_back(Record::F64(prefix + "noise", {7}, noise));
  for (int i = 0; i < 2; ++i) {
    const ViewData& v = fixture.views[i];
    const std::string p = prefix + "view" + std::to_string(i) + "/";
    AppendImage(records, p + "image", v.image);
    AppendPointmap(records, p + "gt_local", v.gt_local);
    AppendPointmap(records, p + "gt_world", v.gt_world);
    AppendPose(records, p + "pose", v.pose);
    records.push_back(Record::F64(p + "focal", {1}, std::vector{v.focal}));
    AppendPointmap(records, p + "pair", v.pair);
    AppendConfidence(records, p + "confidence", v.confidence);
    AppendPointmap(records, p + "mono", v.mono);
    records.push_back(Record::FromTensor(p + "pair_features", v.pair_features));
    records.push_back(Record::FromTensor(p + "mono_features", v.mono_features));
  }
}

SceneFixture ReadFixture(const std::vector<Record>& records,
                         const std::string& prefix) {
  SceneFixture f;
  const Record& seed = FindRecord(records, prefix + "seed");
  if (seed.dtype != DType::kU8 || seed.bytes.size() != 8) {
    throw Error(ErrorCode::kShapeMismatch,
                "record '" + prefix + "seed' must be u8[8]");
  }
  for (int i = 0; i < 8; ++i) {
    f.seed |= static_cast<std::uint64_t>(seed.bytes[i]) << (8 * i);
  }
  const std::vector<double> size = ExpectShape(records, prefix + "size", {2});
  f.height = static_cast<std::size_t>(size[0]);
  f.width = static_cast<std::size_t>(size[1]);
  const std::vector<double> n = ExpectShape(records, prefix + "noise", {7});
  f.noise = NoiseSpec{n[0], n[1], n[2], n[3], n[4], n[5], n[6]};
  for (int i = 0; i < 2; ++i) {
    ViewData& v = f.views[i];
    const std::string p = prefix + "view" + std::to_string(i) + "/";
    v.image = ReadImage(records, p + "image");
    v.gt_local = ReadPointmap(records, p + "gt_local");
    v.gt_world = ReadPointmap(records, p + "gt_world");
    v.pose = ReadPose(records, p + "pose");
    v.focal = ExpectShape(records, p + "focal", {1})[0];
    v.pair = ReadPointmap(records, p + "pair");
    v.confidence = ReadConfidence(records, p + "confidence");
    v.mono = ReadPointmap(records, p + "mono");
    v.pair_features = FindRecord(records, p + "pair_features").ToTensor();
    v.mono_features = FindRecord(records, p + "mono_features").ToTensor();
  }
  return f;
}

void ExportPly(const Pointmap& pm, const ImageGrid& colors,
               const std::filesystem::path& path) {
  if (colors.height() != pm.height() || colors.width() != pm.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "PLY export: image grid differs from pointmap grid");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  }
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << pm.ValidCount() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < pm.pixels(); ++k) {
    if (!pm.valid(k)) continue;
    const Vec3& p = pm[k];
    const Vec3& c = colors[k];
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' '
        << static_cast<int>(ColorByte(c.x())) << ' '
        << static_cast<int>(ColorByte(c.y())) << ' '
        << static_cast<int>(ColorByte(c.z())) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: '" + path.string() + "'");
}

SceneMetrics PoseMetrics(std::string label, const PoseErrors& errors) {
  const std::vector<double> taus{5.0, 10.0, 15.0};
  const PoseAccuracy acc = ComputePoseAccuracy(errors, taus);
  SceneMetrics m;
  m.label = std::move(label);
  m.rra5 = acc.rra[0];
  m.rra10 = acc.rra[1];
  m.rra15 = acc.rra[2];
  m.rta5 = acc.rta[0];
  m.rta10 = acc.rta[1];
  m.rta15 = acc.rta[2];
  m.maa30 = Maa30(errors);
  return m;
}

void MetricReport::Finalize() {
  aggregate = SceneMetrics{};
  aggregate.label = "mean";
  if (scenes.empty()) return;
  const double n = static_cast<double>(scenes.size());
  for (const auto& [name, field] : Columns(true, true)) {
    double sum = 0.0;
    for (const SceneMetrics& s : scenes) sum += s.*field;
    aggregate.*field = sum / n;
  }
}

std::string MetricReport::ToJson() const {
  Json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  j["has_pose"] = has_pose;
  j["has_cloud"] = has_cloud;
  j["scenes"] = Json::array();
  for (const SceneMetrics& s : scenes) {
    j["scenes"].push_back(MetricsToJson(s, has_pose, has_cloud));
  }
  j["aggregate"] = MetricsToJson(aggregate, has_pose, has_cloud);
  return j.dump(2);
}

MetricReport MetricReport::FromJson(const std::string& text) {
  const Json j = Json::parse(text);
  MetricReport r;
  r.command = j.at("command").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.at("config").get<std::map<std::string, std::string>>();
  r.has_pose = j.at("has_pose").get<bool>();
  r.has_cloud = j.at("has_cloud").get<bool>();
  for (const Json& s : j.at("scenes")) r.scenes.push_back(MetricsFromJson(s));
  r.aggregate = MetricsFromJson(j.at("aggregate"));
  return r;
}

std::string MetricReport::ToTable() const {
  const auto cols = Columns(has_pose, has_cloud);
  std::ostringstream os;
  os << command << "  seed=" << seed << "\n";
  for (const auto& [key, value] : config) os << "  " << key << " = " << value << "\n";
  os << std::left << std::setw(12) << "scene";
  for (const auto& col : cols) os << std::right << std::setw(12) << col.first;
  os << "\n" << std::fixed << std::setprecision(6);
  const auto row = [&](const SceneMetrics& m) {
    os << std::left << std::setw(12) << m.label;
    for (const auto& col : cols) os << std::right << std::setw(12) << m.*(col.second);
    os << "\n";
  };
  for (const SceneMetrics& s : scenes) row(s);
  row(aggregate);
  return os.str();
}

}  // namespace monoref
