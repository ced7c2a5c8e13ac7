#include "monoref/refinement.h"

#include <cmath>

#include "monoref/error.h"
#include "monoref/random.h"

namespace monoref {
namespace {

Tensor UniformKernel(Rng& rng, std::size_t out, std::size_t in, std::size_t k) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  std::vector<double> data(out * in * k * k);
  for (double& v : data) v = rng.Uniform(-bound, bound);
  return Tensor({out, in, k, k}, std::move(data));
}

void RequireGrid(const Tensor& t, std::size_t channels, std::size_t h,
                 std::size_t w, const char* what) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != channels ||
      t.dim(2) != h || t.dim(3) != w) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + " must be [1," + std::to_string(channels) +
                    "," + std::to_string(h) + "," + std::to_string(w) +
                    "], got " + ShapeString(t.shape()));
  }
}

}  // namespace

void RefineConfig::Validate() const {
  if (iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "refinement needs N >= 1");
  }
  if (kernel_size % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "kernel size must be odd");
  }
  if (!(offset_gain > 0.0) || !std::isfinite(offset_gain)) {
    throw Error(ErrorCode::kInvalidArgument, "offset gain must be positive");
  }
  if (hidden_channels < 2 || cond_channels < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "hidden channels must be >= 2 and condition channels >= 1");
  }
}

RefineWeights RefineWeights::Initialize(const RefineConfig& config,
                                        std::uint64_t seed) {
  config.Validate();
  Rng rng(seed);
  const std::size_t k = config.kernel_size;
  const std::size_t hid = config.hidden_channels;
  const std::size_t cond = config.cond_channels;
  const std::size_t half = hid / 2;
  RefineWeights w;
  w.config = config;
  w.hidden_kernel = UniformKernel(rng, hid, config.mono_channels, 1);
  w.hidden_bias = Tensor::Zeros({hid});
  w.encoder.conv1_kernel =
      UniformKernel(rng, cond, config.condition_input_channels(), k);
  w.encoder.conv1_bias = Tensor::Zeros({cond});
  w.encoder.conv2_kernel = UniformKernel(rng, cond, cond, k);
  w.encoder.conv2_bias = Tensor::Zeros({cond});
  w.gru.update_kernel = UniformKernel(rng, hid, hid + cond, k);
  w.gru.update_context = Tensor::Zeros({hid});
  w.gru.reset_kernel = UniformKernel(rng, hid, hid + cond, k);
  w.gru.reset_context = Tensor::Zeros({hid});
  w.gru.candidate_kernel = UniformKernel(rng, hid, hid + cond, k);
  w.gru.candidate_context = Tensor::Zeros({hid});
  w.decoder.conv1_kernel = UniformKernel(rng, half, hid, k);
  w.decoder.conv1_bias = Tensor::Zeros({half});
  w.decoder.conv2_kernel = Tensor::Zeros({3, half, k, k});
  w.decoder.conv2_bias = Tensor::Zeros({3});
  return w;
}

void RefineWeights::Visit(
    const std::function<void(const std::string&, const Tensor&)>& f) const {
  const_cast<RefineWeights*>(this)->VisitMutable(
      [&](const std::string& name, Tensor& t) { f(name, t); });
}

void RefineWeights::VisitMutable(
    const std::function<void(const std::string&, Tensor&)>& f) {
  f("hidden.kernel", hidden_kernel);
  f("hidden.bias", hidden_bias);
  f("encoder.conv1.kernel", encoder.conv1_kernel);
  f("encoder.conv1.bias", encoder.conv1_bias);
  f("encoder.conv2.kernel", encoder.conv2_kernel);
  f("encoder.conv2.bias", encoder.conv2_bias);
  f("gru.update.kernel", gru.update_kernel);
  f("gru.update.context", gru.update_context);
  f("gru.reset.kernel", gru.reset_kernel);
  f("gru.reset.context", gru.reset_context);
  f("gru.candidate.kernel", gru.candidate_kernel);
  f("gru.candidate.context", gru.candidate_context);
  f("decoder.conv1.kernel", decoder.conv1_kernel);
  f("decoder.conv1.bias", decoder.conv1_bias);
  f("decoder.conv2.kernel", decoder.conv2_kernel);
  f("decoder.conv2.bias", decoder.conv2_bias);
}

std::size_t RefineWeights::ParameterCount() const {
  std::size_t total = 0;
  Visit([&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

RefineParams RefineParams::Add(Graph& graph, const RefineWeights& weights,
                               bool trainable) {
  std::vector<NodeId> ids;
  weights.Visit([&](const std::string&, const Tensor& t) {
    ids.push_back(graph.Input(t.WithRequiresGrad(trainable)));
  });
  RefineParams p;
  std::size_t i = 0;
  for (NodeId* slot :
       {&p.hidden_kernel, &p.hidden_bias, &p.enc1_kernel, &p.enc1_bias,
        &p.enc2_kernel, &p.enc2_bias, &p.update_kernel, &p.update_context,
        &p.reset_kernel, &p.reset_context, &p.candidate_kernel,
        &p.candidate_context, &p.dec1_kernel, &p.dec1_bias, &p.dec2_kernel,
        &p.dec2_bias}) {
    *slot = ids[i++];
  }
  return p;
}

NodeId& RefineParams::Slot(std::size_t i) {
  NodeId* slots[] = {&hidden_kernel,  &hidden_bias,    &enc1_kernel,
                     &enc1_bias,      &enc2_kernel,    &enc2_bias,
                     &update_kernel,  &update_context, &reset_kernel,
                     &reset_context,  &candidate_kernel,
                     &candidate_context, &dec1_kernel, &dec1_bias,
                     &dec2_kernel,    &dec2_bias};
  if (i >= std::size(slots)) {
    throw Error(ErrorCode::kInvalidArgument,
                "parameter slot " + std::to_string(i) + " out of range");
  }
  return *slots[i];
}

std::vector<NodeId> RefineParams::All() const {
  return {hidden_kernel,  hidden_bias,    enc1_kernel,      enc1_bias,
          enc2_kernel,    enc2_bias,      update_kernel,    update_context,
          reset_kernel,   reset_context,  candidate_kernel, candidate_context,
          dec1_kernel,    dec1_bias,      dec2_kernel,      dec2_bias};
}

Tensor ConditionInputs(const Pointmap& mono_aligned,
                       const Tensor& mono_features, const Tensor& pair_features,
                       const ConfidenceMap& confidence,
                       const ImageGrid& image) {
  const std::size_t h = mono_aligned.height(), w = mono_aligned.width();
  if (confidence.height() != h || confidence.width() != w ||
      image.height() != h || image.width() != w) {
    throw Error(ErrorCode::kShapeMismatch,
                "condition inputs: confidence/image grid differs from the "
                "pointmap grid");
  }
  if (mono_features.rank() != 4 || mono_features.dim(2) != h ||
      mono_features.dim(3) != w) {
    throw Error(ErrorCode::kShapeMismatch,
                "mono features spatial dims (2,3) " +
                    ShapeString(mono_features.shape()) + " differ from " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  if (pair_features.rank() != 4 || pair_features.dim(2) != h ||
      pair_features.dim(3) != w) {
    throw Error(ErrorCode::kShapeMismatch,
                "pair features spatial dims (2,3) " +
                    ShapeString(pair_features.shape()) + " differ from " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  const Tensor parts[] = {
      mono_aligned.Scaled(1.0 / NormFactor(mono_aligned)).ToTensor(),
      mono_features, pair_features, confidence.ToTensor(), image.ToTensor()};
  return ConcatChannels(parts);
}

NodeId EncodeCondition(Graph& graph, NodeId condition_inputs,
                       const RefineParams& params, int pad) {
  const NodeId hidden = graph.Tanh(graph.Conv2d(
      condition_inputs, params.enc1_kernel, params.enc1_bias, 1, pad));
  return graph.Conv2d(hidden, params.enc2_kernel, params.enc2_bias, 1, pad);
}

GruNodes GruStep(Graph& graph, NodeId hidden, NodeId condition,
                 const RefineParams& params, int pad) {
  const NodeId joint = graph.ConcatChannels({hidden, condition});
  GruNodes out;
  out.update_gate = graph.Sigmoid(graph.Conv2d(
      joint, params.update_kernel, params.update_context, 1, pad));
  out.reset_gate = graph.Sigmoid(graph.Conv2d(
      joint, params.reset_kernel, params.reset_context, 1, pad));
  const NodeId gated =
      graph.ConcatChannels({graph.Mul(out.reset_gate, hidden), condition});
  out.candidate = graph.Tanh(graph.Conv2d(
      gated, params.candidate_kernel, params.candidate_context, 1, pad));
  const NodeId keep = graph.Mul(graph.Affine(out.update_gate, -1.0, 1.0), hidden);
  const NodeId write = graph.Mul(out.update_gate, out.candidate);
  out.hidden = graph.Add(keep, write);
  return out;
}

NodeId DecodeOffset(Graph& graph, NodeId hidden, const RefineParams& params,
                    int pad) {
  const NodeId mid = graph.Tanh(
      graph.Conv2d(hidden, params.dec1_kernel, params.dec1_bias, 1, pad));
  return graph.Conv2d(mid, params.dec2_kernel, params.dec2_bias, 1, pad);
}

RefineNodes RefineOnGraph(Graph& graph, NodeId pair, const RefineInputs& inputs,
                          const RefineParams& params,
                          const RefineConfig& config) {
  config.Validate();
  const std::size_t h = inputs.pair.height(), w = inputs.pair.width();
  if (inputs.mono_aligned.height() != h || inputs.mono_aligned.width() != w) {
    throw Error(ErrorCode::kShapeMismatch,
                "refine: aligned mono pointmap grid differs from pair grid");
  }
  RequireGrid(graph.value(pair), 3, h, w, "refine pair pointmap");
  RequireGrid(inputs.mono_features, config.mono_channels, h, w,
              "mono features");
  RequireGrid(inputs.pair_features, config.pair_channels, h, w,
              "pair features");
  const int pad = config.same_pad();

  const NodeId cond_in = graph.Constant(
      ConditionInputs(inputs.mono_aligned, inputs.mono_features,
                      inputs.pair_features, inputs.confidence, inputs.image));
  const NodeId condition = EncodeCondition(graph, cond_in, params, pad);

  const NodeId mono_feat = graph.Constant(inputs.mono_features);
  NodeId hidden = graph.Tanh(
      graph.Conv2d(mono_feat, params.hidden_kernel, params.hidden_bias, 1, 0));

  // Offsets only move valid pixels, scaled back to scene units.
  const double scale = config.offset_gain * NormFactor(inputs.mono_aligned);
  const Tensor mask = inputs.pair.MaskTensor();
  std::vector<double> expanded;
  expanded.reserve(3 * mask.size());
  for (int c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < mask.size(); ++k) {
      expanded.push_back(mask[k] * scale);
    }
  }
  const NodeId offset_gain = graph.Constant(Tensor({1, 3, h, w}, expanded));

  RefineNodes out;
  out.valid = inputs.pair.mask();
  out.hidden.push_back(hidden);
  NodeId current = pair;
  for (int j = 0; j < config.iterations; ++j) {
    hidden = GruStep(graph, hidden, condition, params, pad).hidden;
    const NodeId offset = graph.Mul(DecodeOffset(graph, hidden, params, pad),
                                    offset_gain);
    current = graph.Add(current, offset);
    out.hidden.push_back(hidden);
    out.iterates.push_back(current);
  }
  return out;
}

Tensor EncodeCondition(const Pointmap& mono_aligned,
                       const Tensor& mono_features,
                       const Tensor& pair_features,
                       const ConfidenceMap& confidence, const ImageGrid& image,
                       const RefineWeights& weights) {
  Graph graph;
  const RefineParams params = RefineParams::Add(graph, weights, false);
  const NodeId in = graph.Constant(ConditionInputs(
      mono_aligned, mono_features, pair_features, confidence, image));
  return graph.value(
      EncodeCondition(graph, in, params, weights.config.same_pad()));
}

GruStepResult GruStep(const Tensor& hidden, const Tensor& condition,
                      const RefineWeights& weights) {
  Graph graph;
  const RefineParams params = RefineParams::Add(graph, weights, false);
  const GruNodes nodes =
      GruStep(graph, graph.Constant(hidden), graph.Constant(condition), params,
              weights.config.same_pad());
  return GruStepResult{graph.value(nodes.hidden), graph.value(nodes.update_gate),
                       graph.value(nodes.reset_gate),
                       graph.value(nodes.candidate)};
}

Tensor DecodeOffset(const Tensor& hidden, const RefineWeights& weights,
                    double scale) {
  Graph graph;
  const RefineParams params = RefineParams::Add(graph, weights, false);
  const NodeId offset = DecodeOffset(graph, graph.Constant(hidden), params,
                                     weights.config.same_pad());
  return graph.value(graph.Affine(offset, scale, 0.0));
}

std::vector<Pointmap> Refine(const RefineInputs& inputs,
                             const RefineWeights& weights) {
  Graph graph;
  const RefineParams params = RefineParams::Add(graph, weights, false);
  const NodeId pair = graph.Constant(inputs.pair.ToTensor());
  const RefineNodes nodes =
      RefineOnGraph(graph, pair, inputs, params, weights.config);
  std::vector<Pointmap> out;
  out.reserve(nodes.iterates.size());
  for (NodeId id : nodes.iterates) {
    out.push_back(Pointmap::FromTensor(graph.value(id), nodes.valid));
  }
  return out;
}

}  // namespace monoref
