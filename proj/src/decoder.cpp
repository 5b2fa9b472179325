#include "windcast/decoder.hpp"

#include <string>

namespace windcast {

DecoderParams init_decoder_params(Rng& rng, std::size_t s_count, std::size_t d,
                                  std::size_t patch_len, Activation activation,
                                  bool per_channel_gate) {
  DecoderParams p;
  // transport starts mild so early training is local-dominant
  p.gamma = per_channel_gate ? Tensor::full({s_count, d}, 0.1) : Tensor::full({s_count}, 0.1);
  p.w_dec = randn(rng, {d, patch_len}, 0.02);
  p.b_dec = Tensor({patch_len});
  p.activation = activation;
  return p;
}

Tensor fuse(const Tensor& local, const Tensor& neighbor, const Tensor& gamma) {
  Graph g;
  Graph::NodeId out =
      op_fuse_gate(g, g.constant(local), g.constant(neighbor), g.constant(gamma));
  return g.value(out);
}

Graph::NodeId build_decode(Graph& g, Graph::NodeId fused, Graph::NodeId w_dec,
                           Graph::NodeId b_dec, Activation activation) {
  Graph::NodeId affine = op_add_bias(g, op_batch_matmul(g, fused, w_dec), b_dec);
  return op_activation(g, affine, activation);
}

Tensor decode(const Tensor& fused, const DecoderParams& params) {
  Graph g;
  Graph::NodeId out = build_decode(g, g.constant(fused), g.constant(params.w_dec),
                                   g.constant(params.b_dec), params.activation);
  return g.value(out);
}

Tensor reshape_forecast(const Tensor& y_patch) {
  if (y_patch.rank() != 3) throw ShapeError("patch forecast must be S x M_pred x P");
  const std::size_t s_count = y_patch.dim(0);
  const std::size_t horizon = y_patch.dim(1) * y_patch.dim(2);
  return Tensor({s_count, horizon}, y_patch.values());
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "gelu") return Activation::kGelu;
  if (s == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kGelu: return "gelu";
    case Activation::kSoftplus: return "softplus";
  }
  return "identity";
}

}  // namespace windcast
