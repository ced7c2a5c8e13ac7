#include "monoref/tensor.h"

#include <Eigen/Core>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "monoref/error.h"

namespace monoref {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

constexpr double kOpenUpper = 1.0 - DBL_EPSILON / 2.0;

double SigmoidValue(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::clamp(y, DBL_TRUE_MIN, kOpenUpper);
}

double TanhValue(double x) {
  return std::clamp(std::tanh(x), -kOpenUpper, kOpenUpper);
}

void RequireRank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + " must be rank 4 (N,C,H,W), got " +
                    ShapeString(t.shape()));
  }
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": " +
                                               ShapeString(a.shape()) +
                                               " vs " + ShapeString(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t out_h, out_w;
  int stride, pad;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t pixels() const { return out_h * out_w; }
};

ConvGeometry CheckConv(const Tensor& input, const Tensor& kernel,
                       const Tensor& bias, int stride, int pad) {
  RequireRank4(input, "conv2d input");
  RequireRank4(kernel, "conv2d kernel");
  if (stride < 1) {
    throw Error(ErrorCode::kInvalidArgument, "conv2d stride must be >= 1");
  }
  if (pad < 0) {
    throw Error(ErrorCode::kInvalidArgument, "conv2d pad must be >= 0");
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.out_channels = kernel.dim(0);
  g.kernel_h = kernel.dim(2);
  g.kernel_w = kernel.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (kernel.dim(1) != g.in_channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d channel dimension (dim 1): input has " +
                    std::to_string(g.in_channels) + ", kernel expects " +
                    std::to_string(kernel.dim(1)));
  }
  if (g.kernel_h % 2 == 0 || g.kernel_w % 2 == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d kernel spatial dims (dims 2,3) must be odd, got " +
                    ShapeString(kernel.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != g.out_channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d bias must have shape [" +
                    std::to_string(g.out_channels) + "], got " +
                    ShapeString(bias.shape()));
  }
  const std::size_t padded_h = g.height + 2 * static_cast<std::size_t>(pad);
  const std::size_t padded_w = g.width + 2 * static_cast<std::size_t>(pad);
  if (padded_h < g.kernel_h) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d height (dim 2) too small for kernel");
  }
  if (padded_w < g.kernel_w) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d width (dim 3) too small for kernel");
  }
  g.out_h = (padded_h - g.kernel_h) / stride + 1;
  g.out_w = (padded_w - g.kernel_w) / stride + 1;
  return g;
}

// cols is (patch x pixels), row-major.
void Im2Col(const ConvGeometry& g, const double* image, double* cols) {
  const long pad = g.pad;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        double* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) *
                                 g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ky) - pad;
          double* dst = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src_row = plane + y * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kx) - pad;
            dst[ox] = (x < 0 || x >= static_cast<long>(g.width)) ? 0.0
                                                                  : src_row[x];
          }
        }
      }
    }
  }
}

void Col2ImAccumulate(const ConvGeometry& g, const double* cols,
                      double* image) {
  const long pad = g.pad;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const double* row =
            cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ky) - pad;
          if (y < 0 || y >= static_cast<long>(g.height)) continue;
          const double* src = row + oy * g.out_w;
          double* dst_row = plane + y * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kx) - pad;
            if (x < 0 || x >= static_cast<long>(g.width)) continue;
            dst_row[x] += src[ox];
          }
        }
      }
    }
  }
}

// Per-axis sampling table for align-corners-false bilinear interpolation.
struct AxisSamples {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisSamples MakeAxisSamples(std::size_t in, std::size_t out) {
  AxisSamples s;
  s.lo.resize(out);
  s.hi.resize(out);
  s.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    s.lo[i] = lo;
    s.hi[i] = std::min(lo + 1, in - 1);
    s.frac[i] = src - static_cast<double>(lo);
  }
  return s;
}

}  // namespace

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)),
      data_(std::move(data)),
      requires_grad_(requires_grad) {
  if (data_.size() != NumElements(shape_)) {
    throw Error(ErrorCode::kShapeMismatch,
                "tensor data length " + std::to_string(data_.size()) +
                    " does not match shape " + ShapeString(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(ErrorCode::kNonFinite,
                  "tensor entry " + std::to_string(i) + " of shape " +
                      ShapeString(shape_) + " is not finite");
    }
  }
}

Tensor Tensor::Zeros(Shape shape) { return Filled(std::move(shape), 0.0); }

Tensor Tensor::Filled(Shape shape, double value) {
  const std::size_t n = NumElements(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "item() needs a one-element tensor, got " +
                    ShapeString(shape_));
  }
  return data_[0];
}

Tensor Tensor::WithRequiresGrad(bool requires_grad) const {
  Tensor copy = *this;
  copy.requires_grad_ = requires_grad;
  return copy;
}

Tensor Tensor::WithEntry(std::size_t i, double value) const {
  std::vector<double> data = data_;
  data.at(i) = value;
  return Tensor(shape_, std::move(data), requires_grad_);
}

bool Tensor::BitwiseEqual(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::equal(data_.begin(), data_.end(), other.data_.begin(),
                    [](double a, double b) {
                      return std::memcmp(&a, &b, sizeof(double)) == 0;
                    });
}

Tensor Activate(Activation kind, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kind == Activation::kSigmoid ? SigmoidValue(x[i]) : TanhValue(x[i]);
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor Conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad) {
  const ConvGeometry g = CheckConv(input, kernel, bias, stride, pad);
  std::vector<double> out(g.batch * g.out_channels * g.pixels());
  std::vector<double> cols(g.patch() * g.pixels());
  const ConstMatrixMap weights(kernel.data().data(), g.out_channels, g.patch());
  for (std::size_t n = 0; n < g.batch; ++n) {
    Im2Col(g, input.data().data() + n * g.in_channels * g.height * g.width,
           cols.data());
    const ConstMatrixMap col_matrix(cols.data(), g.patch(), g.pixels());
    MatrixMap result(out.data() + n * g.out_channels * g.pixels(),
                     g.out_channels, g.pixels());
    result.noalias() = weights * col_matrix;
    for (std::size_t c = 0; c < g.out_channels; ++c) {
      result.row(c).array() += bias[c];
    }
  }
  return Tensor({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
}

Tensor ConcatChannels(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "concat of zero tensors");
  }
  const Tensor& first = parts.front();
  RequireRank4(first, "concat part");
  std::size_t channels = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    RequireRank4(parts[i], "concat part");
    for (std::size_t axis : {0u, 2u, 3u}) {
      if (parts[i].dim(axis) != first.dim(axis)) {
        throw Error(ErrorCode::kShapeMismatch,
                    "concat part " + std::to_string(i) + " differs in dim " +
                        std::to_string(axis) + ": " +
                        ShapeString(parts[i].shape()) + " vs " +
                        ShapeString(first.shape()));
      }
    }
    channels += parts[i].dim(1);
  }
  const std::size_t batch = first.dim(0);
  const std::size_t plane = first.dim(2) * first.dim(3);
  std::vector<double> out;
  out.reserve(batch * channels * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    for (const Tensor& part : parts) {
      const std::size_t block = part.dim(1) * plane;
      const auto src = part.data().subspan(n * block, block);
      out.insert(out.end(), src.begin(), src.end());
    }
  }
  return Tensor({batch, channels, first.dim(2), first.dim(3)}, std::move(out));
}

Tensor SliceChannels(const Tensor& x, std::size_t begin, std::size_t count) {
  RequireRank4(x, "slice input");
  if (begin + count > x.dim(1) || count == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "channel slice [" + std::to_string(begin) + ", " +
                    std::to_string(begin + count) + ") out of range for dim 1 of " +
                    ShapeString(x.shape()));
  }
  const std::size_t plane = x.dim(2) * x.dim(3);
  std::vector<double> out;
  out.reserve(x.dim(0) * count * plane);
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    const auto src =
        x.data().subspan((n * x.dim(1) + begin) * plane, count * plane);
    out.insert(out.end(), src.begin(), src.end());
  }
  return Tensor({x.dim(0), count, x.dim(2), x.dim(3)}, std::move(out));
}

Tensor BilinearResize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  RequireRank4(x, "resize input");
  if (out_h < 1 || out_w < 1) {
    throw Error(ErrorCode::kInvalidArgument, "resize target must be >= 1x1");
  }
  const std::size_t in_h = x.dim(2), in_w = x.dim(3);
  const AxisSamples ys = MakeAxisSamples(in_h, out_h);
  const AxisSamples xs = MakeAxisSamples(in_w, out_w);
  const std::size_t planes = x.dim(0) * x.dim(1);
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data().data() + p * in_h * in_w;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const double fy = ys.frac[i];
      const double* r0 = src + ys.lo[i] * in_w;
      const double* r1 = src + ys.hi[i] * in_w;
      for (std::size_t j = 0; j < out_w; ++j) {
        const double fx = xs.frac[j];
        const double top = (1.0 - fx) * r0[xs.lo[j]] + fx * r0[xs.hi[j]];
        const double bottom = (1.0 - fx) * r1[xs.lo[j]] + fx * r1[xs.hi[j]];
        dst[i * out_w + j] = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return Tensor({x.dim(0), x.dim(1), out_h, out_w}, std::move(out));
}

// ---------------------------------------------------------------------------
// Graph

NodeId Graph::Push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "node id " + std::to_string(id.index) + " not in graph");
  }
  return nodes_[id.index];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

bool Graph::requires_grad(NodeId id) const { return node(id).requires_grad; }

Tensor Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (id.index < grads_.size() && !grads_[id.index].empty()) {
    return Tensor(n.value.shape(), grads_[id.index]);
  }
  return Tensor::Zeros(n.value.shape());
}

NodeId Graph::Input(Tensor value) {
  Node n;
  n.requires_grad = value.requires_grad();
  n.value = std::move(value);
  return Push(std::move(n));
}

NodeId Graph::Constant(Tensor value) {
  return Input(value.WithRequiresGrad(false));
}

NodeId Graph::Conv2d(NodeId input, NodeId kernel, NodeId bias, int stride,
                     int pad) {
  Node n;
  n.op = Op::kConv2d;
  n.inputs = {input, kernel, bias};
  n.stride = stride;
  n.pad = pad;
  n.value = monoref::Conv2d(value(input), value(kernel), value(bias), stride, pad);
  n.requires_grad =
      requires_grad(input) || requires_grad(kernel) || requires_grad(bias);
  return Push(std::move(n));
}

NodeId Graph::Activate(Activation kind, NodeId x) {
  Node n;
  n.op = kind == Activation::kSigmoid ? Op::kSigmoid : Op::kTanh;
  n.inputs = {x};
  n.value = monoref::Activate(kind, value(x));
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

NodeId Graph::ConcatChannels(std::span<const NodeId> parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  Node n;
  n.op = Op::kConcat;
  for (NodeId p : parts) {
    values.push_back(value(p));
    n.inputs.push_back(p);
    n.requires_grad = n.requires_grad || requires_grad(p);
  }
  n.value = monoref::ConcatChannels(values);
  return Push(std::move(n));
}

NodeId Graph::SliceChannels(NodeId x, std::size_t begin, std::size_t count) {
  Node n;
  n.op = Op::kSlice;
  n.inputs = {x};
  n.begin = begin;
  n.value = monoref::SliceChannels(value(x), begin, count);
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

NodeId Graph::BilinearResize(NodeId x, std::size_t out_h, std::size_t out_w) {
  Node n;
  n.op = Op::kResize;
  n.inputs = {x};
  n.value = monoref::BilinearResize(value(x), out_h, out_w);
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

namespace {

template <typename F>
Tensor Elementwise(const Tensor& a, const Tensor& b, F f, const char* what) {
  RequireSameShape(a, b, what);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return Tensor(a.shape(), std::move(out));
}

template <typename F>
Tensor Map(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

NodeId Graph::Add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.value = Elementwise(value(a), value(b), std::plus<>(), "add");
  n.requires_grad = requires_grad(a) || requires_grad(b);
  return Push(std::move(n));
}

NodeId Graph::Sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kSub;
  n.inputs = {a, b};
  n.value = Elementwise(value(a), value(b), std::minus<>(), "sub");
  n.requires_grad = requires_grad(a) || requires_grad(b);
  return Push(std::move(n));
}

NodeId Graph::Mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.value = Elementwise(value(a), value(b), std::multiplies<>(), "mul");
  n.requires_grad = requires_grad(a) || requires_grad(b);
  return Push(std::move(n));
}

NodeId Graph::Affine(NodeId x, double scale, double shift) {
  Node n;
  n.op = Op::kAffine;
  n.inputs = {x};
  n.scale = scale;
  n.value = Map(value(x), [=](double v) { return scale * v + shift; });
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

NodeId Graph::Log(NodeId x) {
  const Tensor& in = value(x);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!(in[i] > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "log of nonpositive entry " + std::to_string(i));
    }
  }
  Node n;
  n.op = Op::kLog;
  n.inputs = {x};
  n.value = Map(in, [](double v) { return std::log(v); });
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

NodeId Graph::ChannelNorm(NodeId x) {
  const Tensor& in = value(x);
  RequireRank4(in, "channel norm input");
  const std::size_t channels = in.dim(1);
  const std::size_t plane = in.dim(2) * in.dim(3);
  std::vector<double> out(in.dim(0) * plane, 0.0);
  for (std::size_t b = 0; b < in.dim(0); ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      double sq = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = in[(b * channels + c) * plane + p];
        sq += v * v;
      }
      out[b * plane + p] = std::sqrt(sq);
    }
  }
  Node n;
  n.op = Op::kChannelNorm;
  n.inputs = {x};
  n.value = Tensor({in.dim(0), 1, in.dim(2), in.dim(3)}, std::move(out));
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

NodeId Graph::DivScalar(NodeId x, NodeId s) {
  const double denom = value(s).item();
  if (denom == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "division by zero scalar");
  }
  Node n;
  n.op = Op::kDivScalar;
  n.inputs = {x, s};
  n.value = Map(value(x), [=](double v) { return v / denom; });
  n.requires_grad = requires_grad(x) || requires_grad(s);
  return Push(std::move(n));
}

NodeId Graph::MulScalar(NodeId x, NodeId s) {
  const double factor = value(s).item();
  Node n;
  n.op = Op::kMulScalar;
  n.inputs = {x, s};
  n.value = Map(value(x), [=](double v) { return v * factor; });
  n.requires_grad = requires_grad(x) || requires_grad(s);
  return Push(std::move(n));
}

NodeId Graph::MaskedMean(NodeId x, const Tensor& mask) {
  const Tensor& in = value(x);
  RequireSameShape(in, mask, "masked mean mask");
  double weight = 0.0, total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    weight += mask[i];
    total += mask[i] * in[i];
  }
  if (weight == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "masked mean over empty mask");
  }
  Node n;
  n.op = Op::kMaskedMean;
  n.inputs = {x};
  n.aux = Map(mask, [=](double m) { return m / weight; });
  n.value = Tensor::Scalar(total / weight);
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

NodeId Graph::Sum(NodeId x) {
  const Tensor& in = value(x);
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) total += in[i];
  Node n;
  n.op = Op::kSum;
  n.inputs = {x};
  n.value = Tensor::Scalar(total);
  n.requires_grad = requires_grad(x);
  return Push(std::move(n));
}

void Graph::Accumulate(NodeId id, std::span<const double> g) {
  if (!nodes_[id.index].requires_grad) return;
  std::vector<double>& dst = grads_[id.index];
  if (dst.empty()) dst.assign(nodes_[id.index].value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Graph::Backward(NodeId loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "backward needs a scalar loss, got shape " +
                    ShapeString(root.value.shape()));
  }
  grads_.assign(nodes_.size(), {});
  if (!root.requires_grad) return;
  grads_[loss.index] = {1.0};
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && !grads_[i].empty()) BackwardNode(i);
  }
}

void Graph::BackwardNode(std::size_t index) {
  const Node& n = nodes_[index];
  const std::vector<double>& g = grads_[index];
  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kConv2d: {
      const Tensor& input = value(n.inputs[0]);
      const Tensor& kernel = value(n.inputs[1]);
      const ConvGeometry geo =
          CheckConv(input, kernel, value(n.inputs[2]), n.stride, n.pad);
      const bool want_input = requires_grad(n.inputs[0]);
      const bool want_kernel = requires_grad(n.inputs[1]);
      const bool want_bias = requires_grad(n.inputs[2]);
      std::vector<double> d_input(want_input ? input.size() : 0, 0.0);
      std::vector<double> d_kernel(want_kernel ? kernel.size() : 0, 0.0);
      std::vector<double> d_bias(want_bias ? geo.out_channels : 0, 0.0);
      std::vector<double> cols(geo.patch() * geo.pixels());
      const ConstMatrixMap weights(kernel.data().data(), geo.out_channels,
                                   geo.patch());
      const std::size_t image_size = geo.in_channels * geo.height * geo.width;
      for (std::size_t b = 0; b < geo.batch; ++b) {
        const ConstMatrixMap d_out(g.data() + b * geo.out_channels * geo.pixels(),
                                   geo.out_channels, geo.pixels());
        if (want_kernel) {
          Im2Col(geo, input.data().data() + b * image_size, cols.data());
          const ConstMatrixMap col_matrix(cols.data(), geo.patch(),
                                          geo.pixels());
          MatrixMap dk(d_kernel.data(), geo.out_channels, geo.patch());
          dk.noalias() += d_out * col_matrix.transpose();
        }
        if (want_bias) {
          for (std::size_t c = 0; c < geo.out_channels; ++c) {
            const double* row = d_out.data() + c * geo.pixels();
            double total = 0.0;
            for (std::size_t k = 0; k < geo.pixels(); ++k) total += row[k];
            d_bias[c] += total;
          }
        }
        if (want_input) {
          MatrixMap d_cols(cols.data(), geo.patch(), geo.pixels());
          d_cols.noalias() = weights.transpose() * d_out;
          Col2ImAccumulate(geo, cols.data(), d_input.data() + b * image_size);
        }
      }
      if (want_input) Accumulate(n.inputs[0], d_input);
      if (want_kernel) Accumulate(n.inputs[1], d_kernel);
      if (want_bias) Accumulate(n.inputs[2], d_bias);
      return;
    }
    case Op::kSigmoid: {
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        d[i] = g[i] * y * (1.0 - y);
      }
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kTanh: {
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        d[i] = g[i] * (1.0 - y * y);
      }
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kConcat: {
      const std::size_t batch = n.value.dim(0);
      const std::size_t plane = n.value.dim(2) * n.value.dim(3);
      const std::size_t total = n.value.dim(1);
      std::size_t offset = 0;
      for (NodeId part : n.inputs) {
        const std::size_t ch = value(part).dim(1);
        if (requires_grad(part)) {
          std::vector<double> d(batch * ch * plane);
          for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(g.begin() + (b * total + offset) * plane, ch * plane,
                        d.begin() + b * ch * plane);
          }
          Accumulate(part, d);
        }
        offset += ch;
      }
      return;
    }
    case Op::kSlice: {
      const Tensor& in = value(n.inputs[0]);
      const std::size_t plane = in.dim(2) * in.dim(3);
      const std::size_t count = n.value.dim(1);
      std::vector<double> d(in.size(), 0.0);
      for (std::size_t b = 0; b < in.dim(0); ++b) {
        std::copy_n(g.begin() + b * count * plane, count * plane,
                    d.begin() + (b * in.dim(1) + n.begin) * plane);
      }
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kResize: {
      const Tensor& in = value(n.inputs[0]);
      const std::size_t in_h = in.dim(2), in_w = in.dim(3);
      const std::size_t out_h = n.value.dim(2), out_w = n.value.dim(3);
      const AxisSamples ys = MakeAxisSamples(in_h, out_h);
      const AxisSamples xs = MakeAxisSamples(in_w, out_w);
      std::vector<double> d(in.size(), 0.0);
      for (std::size_t p = 0; p < in.dim(0) * in.dim(1); ++p) {
        double* dst = d.data() + p * in_h * in_w;
        const double* src = g.data() + p * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
          const double fy = ys.frac[i];
          for (std::size_t j = 0; j < out_w; ++j) {
            const double fx = xs.frac[j];
            const double v = src[i * out_w + j];
            dst[ys.lo[i] * in_w + xs.lo[j]] += (1.0 - fy) * (1.0 - fx) * v;
            dst[ys.lo[i] * in_w + xs.hi[j]] += (1.0 - fy) * fx * v;
            dst[ys.hi[i] * in_w + xs.lo[j]] += fy * (1.0 - fx) * v;
            dst[ys.hi[i] * in_w + xs.hi[j]] += fy * fx * v;
          }
        }
      }
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kAdd:
      Accumulate(n.inputs[0], g);
      Accumulate(n.inputs[1], g);
      return;
    case Op::kSub: {
      Accumulate(n.inputs[0], g);
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
      Accumulate(n.inputs[1], d);
      return;
    }
    case Op::kMul: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      std::vector<double> d(g.size());
      if (requires_grad(n.inputs[0])) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * b[i];
        Accumulate(n.inputs[0], d);
      }
      if (requires_grad(n.inputs[1])) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * a[i];
        Accumulate(n.inputs[1], d);
      }
      return;
    }
    case Op::kAffine: {
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * n.scale;
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kLog: {
      const Tensor& in = value(n.inputs[0]);
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / in[i];
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kChannelNorm: {
      const Tensor& in = value(n.inputs[0]);
      const std::size_t channels = in.dim(1);
      const std::size_t plane = in.dim(2) * in.dim(3);
      std::vector<double> d(in.size(), 0.0);
      for (std::size_t b = 0; b < in.dim(0); ++b) {
        for (std::size_t p = 0; p < plane; ++p) {
          const double norm = n.value[b * plane + p];
          if (norm == 0.0) continue;
          const double scale = g[b * plane + p] / norm;
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t k = (b * channels + c) * plane + p;
            d[k] = scale * in[k];
          }
        }
      }
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kDivScalar: {
      const Tensor& x = value(n.inputs[0]);
      const double s = value(n.inputs[1]).item();
      if (requires_grad(n.inputs[0])) {
        std::vector<double> d(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / s;
        Accumulate(n.inputs[0], d);
      }
      if (requires_grad(n.inputs[1])) {
        double ds = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) ds -= g[i] * x[i];
        const double d[1] = {ds / (s * s)};
        Accumulate(n.inputs[1], d);
      }
      return;
    }
    case Op::kMulScalar: {
      const Tensor& x = value(n.inputs[0]);
      const double s = value(n.inputs[1]).item();
      if (requires_grad(n.inputs[0])) {
        std::vector<double> d(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * s;
        Accumulate(n.inputs[0], d);
      }
      if (requires_grad(n.inputs[1])) {
        double ds = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) ds += g[i] * x[i];
        const double d[1] = {ds};
        Accumulate(n.inputs[1], d);
      }
      return;
    }
    case Op::kMaskedMean: {
      std::vector<double> d(n.aux.size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[0] * n.aux[i];
      Accumulate(n.inputs[0], d);
      return;
    }
    case Op::kSum: {
      std::vector<double> d(value(n.inputs[0]).size(), g[0]);
      Accumulate(n.inputs[0], d);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

Tensor AnalyticGradient(const ScalarFn& f, const Tensor& x) {
  Graph graph;
  const NodeId in = graph.Input(x.WithRequiresGrad(true));
  const NodeId out = f(graph, in);
  graph.Backward(out);
  return graph.grad(in);
}

namespace {
double Evaluate(const ScalarFn& f, const Tensor& x) {
  Graph graph;
  const NodeId in = graph.Constant(x);
  return graph.value(f(graph, in)).item();
}
}  // namespace

Tensor NumericGradient(const ScalarFn& f, const Tensor& x, double eps) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double plus = Evaluate(f, x.WithEntry(i, x[i] + eps));
    const double minus = Evaluate(f, x.WithEntry(i, x[i] - eps));
    g[i] = (plus - minus) / (2.0 * eps);
  }
  return Tensor(x.shape(), std::move(g));
}

double RelativeGradientError(const Tensor& analytic, const Tensor& numeric) {
  RequireSameShape(analytic, numeric, "gradient comparison");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    worst = std::max(worst,
                     std::abs(a - n) / (std::abs(a) + std::abs(n) + 1e-12));
  }
  return worst;
}

double GradCheck(const ScalarFn& f, const Tensor& x, double eps) {
  return RelativeGradientError(AnalyticGradient(f, x),
                               NumericGradient(f, x, eps));
}

}  // namespace monoref
