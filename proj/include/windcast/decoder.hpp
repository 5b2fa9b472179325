#pragma once

#include "windcast/graph.hpp"
#include "windcast/tensor.hpp"

namespace windcast {

struct DecoderParams {
  Tensor gamma;  // S (per-station gate) or S x d when per-channel
  Tensor w_dec;  // d x P
  Tensor b_dec;  // P
  Activation activation = Activation::kIdentity;
};

DecoderParams init_decoder_params(Rng& rng, std::size_t s_count, std::size_t d,
                                  std::size_t patch_len, Activation activation,
                                  bool per_channel_gate);

/// C = G + gamma (*) C_nb.
Tensor fuse(const Tensor& local, const Tensor& neighbor, const Tensor& gamma);

/// Y_patch = activation(C W_dec + b_dec), shape S x M_pred x P.
Tensor decode(const Tensor& fused, const DecoderParams& params);

/// Concatenates patches in temporal order to S x H.
Tensor reshape_forecast(const Tensor& y_patch);

Graph::NodeId build_decode(Graph& g, Graph::NodeId fused, Graph::NodeId w_dec,
                           Graph::NodeId b_dec, Activation activation);

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

}  // namespace windcast
