#pragma once

// Monocular-guided pointmap refinement: a convolutional condition encoder,
// a ConvGRU updater and a residual offset decoder unrolled for a fixed
// number of iterations.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "monoref/pointmap.h"
#include "monoref/tensor.h"

namespace monoref {

inline constexpr std::size_t kMonoFeatureChannels = 64;
inline constexpr std::size_t kPairFeatureChannels = 128;

struct RefineConfig {
  int iterations = 2;
  std::size_t hidden_channels = 32;
  std::size_t cond_channels = 32;
  std::size_t kernel_size = 3;
  std::size_t mono_channels = kMonoFeatureChannels;
  std::size_t pair_channels = kPairFeatureChannels;
  // Fixed factor between the decoder output and the offset in units of the
  // aligned mono map's norm factor.
  double offset_gain = 1.0;

  // pointmap + mono features + pair features + confidence + RGB
  std::size_t condition_input_channels() const {
    return 3 + mono_channels + pair_channels + 1 + 3;
  }
  int same_pad() const { return static_cast<int>(kernel_size / 2); }
  // Throws kInvalidArgument on an unusable configuration.
  void Validate() const;
};

struct EncoderWeights {
  Tensor conv1_kernel, conv1_bias;  // condition inputs -> cond_channels
  Tensor conv2_kernel, conv2_bias;  // cond_channels -> cond_channels
};

// Kernels act on [h, x] (hidden channels first); contexts are per-channel
// offsets broadcast over the grid.
struct GruWeights {
  Tensor update_kernel, update_context;
  Tensor reset_kernel, reset_context;
  Tensor candidate_kernel, candidate_context;
};

struct DecoderWeights {
  Tensor conv1_kernel, conv1_bias;  // hidden -> hidden / 2
  Tensor conv2_kernel, conv2_bias;  // hidden / 2 -> 3, zero at init
};

struct RefineWeights {
  RefineConfig config;
  Tensor hidden_kernel, hidden_bias;  // 1x1 projection of mono features
  EncoderWeights encoder;
  GruWeights gru;
  DecoderWeights decoder;

  // Seed-pinned initialisation: uniform(+-1/sqrt(fan_in)) kernels, zero
  // biases and contexts, zero final decoder layer.
  static RefineWeights Initialize(const RefineConfig& config,
                                  std::uint64_t seed);

  // Fixed-order traversal used by serialization and optimizers.
  void Visit(const std::function<void(const std::string&, const Tensor&)>& f)
      const;
  void VisitMutable(const std::function<void(const std::string&, Tensor&)>& f);
  std::size_t ParameterCount() const;
};

// Per-view inputs of the refinement module. All grids share H x W.
struct RefineInputs {
  Pointmap pair;               // initial pairwise pointmap
  ConfidenceMap confidence;    // pairwise confidence
  Pointmap mono_aligned;       // mono pointmap after global alignment
  Tensor mono_features;        // [1, 64, H, W]
  Tensor pair_features;        // [1, 128, H, W]
  ImageGrid image;
};

// Graph-side handles for a RefineWeights instance.
struct RefineParams {
  NodeId hidden_kernel, hidden_bias;
  NodeId enc1_kernel, enc1_bias, enc2_kernel, enc2_bias;
  NodeId update_kernel, update_context, reset_kernel, reset_context;
  NodeId candidate_kernel, candidate_context;
  NodeId dec1_kernel, dec1_bias, dec2_kernel, dec2_bias;

  // Inserts every weight as a leaf; tracked for gradients iff `trainable`.
  static RefineParams Add(Graph& graph, const RefineWeights& weights,
                          bool trainable);
  // Same fixed order as RefineWeights::Visit.
  std::vector<NodeId> All() const;
  // Mutable handle to the i-th entry of All().
  NodeId& Slot(std::size_t i);
};

// Stacks [M / z_M, F_mono, F_pair, w, I] into a [1, 199, H, W] tensor.
Tensor ConditionInputs(const Pointmap& mono_aligned, const Tensor& mono_features,
                       const Tensor& pair_features,
                       const ConfidenceMap& confidence, const ImageGrid& image);

NodeId EncodeCondition(Graph& graph, NodeId condition_inputs,
                       const RefineParams& params, int pad);
struct GruNodes {
  NodeId hidden;
  NodeId update_gate, reset_gate, candidate;
};
GruNodes GruStep(Graph& graph, NodeId hidden, NodeId condition,
                 const RefineParams& params, int pad);
// Offset in normalised units ([1, 3, H, W]).
NodeId DecodeOffset(Graph& graph, NodeId hidden, const RefineParams& params,
                    int pad);

struct RefineNodes {
  std::vector<NodeId> iterates;  // P^1 .. P^N
  std::vector<NodeId> hidden;    // h^0 .. h^N
  Mask valid;
};

// Unrolls the refinement loop on `graph`. `pair` is the node of the initial
// pointmap ([1, 3, H, W]); offsets are decoded in units of the aligned mono
// map's norm factor and applied at valid pixels only.
RefineNodes RefineOnGraph(Graph& graph, NodeId pair, const RefineInputs& inputs,
                          const RefineParams& params,
                          const RefineConfig& config);

// Value-level wrappers.
Tensor EncodeCondition(const Pointmap& mono_aligned,
                       const Tensor& mono_features,
                       const Tensor& pair_features,
                       const ConfidenceMap& confidence, const ImageGrid& image,
                       const RefineWeights& weights);

struct GruStepResult {
  Tensor hidden;
  Tensor update_gate;
  Tensor reset_gate;
  Tensor candidate;
};
GruStepResult GruStep(const Tensor& hidden, const Tensor& condition,
                      const RefineWeights& weights);

// Offset grid scaled to scene units by `scale`.
Tensor DecodeOffset(const Tensor& hidden, const RefineWeights& weights,
                    double scale = 1.0);

std::vector<Pointmap> Refine(const RefineInputs& inputs,
                             const RefineWeights& weights);

}  // namespace monoref
