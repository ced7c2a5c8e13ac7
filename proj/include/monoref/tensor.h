#pragma once

// Dense 64-bit tensors and a tape-based reverse-mode autodiff graph covering
// the operations the refinement network and its losses are built from.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace monoref {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Immutable value once constructed. Grid tensors use N,C,H,W order.
class Tensor {
 public:
  Tensor() = default;
  // Throws kShapeMismatch if data.size() != product(shape) and kNonFinite on
  // NaN/Inf entries.
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor Zeros(Shape shape);
  static Tensor Filled(Shape shape, double value);
  static Tensor Scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const& { return data_; }
  // Rvalue tensors hand over their storage so range-for over a temporary's
  // data stays valid.
  std::vector<double> data() && { return std::move(data_); }
  double operator[](std::size_t i) const { return data_[i]; }
  // 4-D accessor.
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor WithRequiresGrad(bool requires_grad) const;

  // Returns a copy with one entry replaced; used by finite differences.
  Tensor WithEntry(std::size_t i, double value) const;

  bool BitwiseEqual(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

enum class Activation { kSigmoid, kTanh };

// Forward-only helpers on values.
Tensor Activate(Activation kind, const Tensor& x);
Tensor Conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);
Tensor ConcatChannels(std::span<const Tensor> parts);
Tensor SliceChannels(const Tensor& x, std::size_t begin, std::size_t count);
Tensor BilinearResize(const Tensor& x, std::size_t out_h, std::size_t out_w);

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

// Single-owner computation tape. Nodes are appended in topological order so
// backward is a reverse sweep. Not thread-safe; build one graph per thread.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaf node. Gradients are tracked iff `value.requires_grad()`.
  NodeId Input(Tensor value);
  NodeId Constant(Tensor value);

  NodeId Conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, int pad);
  NodeId Activate(Activation kind, NodeId x);
  NodeId Sigmoid(NodeId x) { return Activate(Activation::kSigmoid, x); }
  NodeId Tanh(NodeId x) { return Activate(Activation::kTanh, x); }
  NodeId ConcatChannels(std::span<const NodeId> parts);
  NodeId ConcatChannels(std::initializer_list<NodeId> parts) {
    return ConcatChannels(std::span<const NodeId>(parts.begin(), parts.size()));
  }
  NodeId SliceChannels(NodeId x, std::size_t begin, std::size_t count);
  NodeId BilinearResize(NodeId x, std::size_t out_h, std::size_t out_w);

  NodeId Add(NodeId a, NodeId b);
  NodeId Sub(NodeId a, NodeId b);
  NodeId Mul(NodeId a, NodeId b);
  // scale * x + shift, elementwise.
  NodeId Affine(NodeId x, double scale, double shift);
  NodeId Log(NodeId x);
  // [N,C,H,W] -> [N,1,H,W], Euclidean norm across channels. The subgradient
  // at a zero vector is taken as zero.
  NodeId ChannelNorm(NodeId x);
  // x / s and x * s for a one-element node s.
  NodeId DivScalar(NodeId x, NodeId s);
  NodeId MulScalar(NodeId x, NodeId s);
  // Sum(mask * x) / Sum(mask) with a constant mask of x's shape. Throws
  // kInvalidArgument when the mask sums to zero.
  NodeId MaskedMean(NodeId x, const Tensor& mask);
  NodeId Sum(NodeId x);

  // Reverse sweep from a one-element node. Gradients of every tracked node
  // are recomputed from zero on each call.
  void Backward(NodeId loss);

  const Tensor& value(NodeId id) const;
  // Zero tensor for nodes without gradient tracking or before Backward.
  Tensor grad(NodeId id) const;
  bool requires_grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kConv2d, kSigmoid, kTanh, kConcat, kSlice, kResize, kAdd, kSub,
    kMul, kAffine, kLog, kChannelNorm, kDivScalar, kMulScalar, kMaskedMean,
    kSum,
  };
  struct Node {
    Op op = Op::kLeaf;
    std::vector<NodeId> inputs;
    Tensor value;
    bool requires_grad = false;
    int stride = 1;
    int pad = 0;
    double scale = 1.0;
    std::size_t begin = 0;
    Tensor aux;  // mask for kMaskedMean
  };

  NodeId Push(Node node);
  const Node& node(NodeId id) const;
  void Accumulate(NodeId id, std::span<const double> g);
  void BackwardNode(std::size_t index);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// Builds a scalar computation on a graph from one input node.
using ScalarFn = std::function<NodeId(Graph&, NodeId)>;

Tensor AnalyticGradient(const ScalarFn& f, const Tensor& x);
Tensor NumericGradient(const ScalarFn& f, const Tensor& x, double eps = 1e-5);
// max_i |a_i - n_i| / (|a_i| + |n_i| + 1e-12)
double RelativeGradientError(const Tensor& analytic, const Tensor& numeric);
// Central-difference check of the graph's gradient of f at x.
double GradCheck(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace monoref
