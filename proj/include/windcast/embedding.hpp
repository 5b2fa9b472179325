#pragma once

#include <utility>
#include <vector>

#include "windcast/dataio.hpp"
#include "windcast/graph.hpp"
#include "windcast/tensor.hpp"

namespace windcast {

/// Identifies which feature and which patch within that feature a token
/// came from.
struct TokenMeta {
  std::size_t feature = 0;
  std::size_t patch = 0;
};

/// All time-feature tokens of one window: feature i contributes
/// (L + m_i) / P patches in temporal order, features concatenated in spec
/// order. N_all is identical across stations.
struct TokenGrid {
  Tensor values;                // S x N_all x P
  std::vector<TokenMeta> meta;  // N_all entries
  std::vector<std::pair<std::size_t, std::size_t>> segments;  // token range per feature
};

struct EmbedParams {
  Tensor w_proj;        // P x d patch projection
  Tensor conv_kernel;   // 3 x d depthwise convolution taps
  Tensor station_embed; // S x d (E)
  Tensor station_gain;  // S x d (Gamma), initialized to ones
  Tensor station_bias;  // S x d (B), initialized to zeros
};

EmbedParams init_embed_params(Rng& rng, std::size_t s_count, std::size_t patch_len,
                              std::size_t d);

/// Partitions each feature block into non-overlapping P-hour patches.
TokenGrid tokenize(const WindowSample& sample, std::size_t patch_len);

/// Fixed sinusoidal code per feature index, the usual interleaved sin/cos
/// table over a 10^4 frequency ladder.
Tensor feature_code_table(std::size_t feature_count, std::size_t d);

/// Graph form of the token embedding: projected patches plus the depthwise
/// convolutional position term plus the per-feature sinusoidal code.
Graph::NodeId build_embedding(Graph& g, Graph::NodeId tokens, Graph::NodeId w_proj,
                              Graph::NodeId conv_kernel, const TokenGrid& grid,
                              const Tensor& code_table);

/// Value forms used directly by tests and the spec surface.
Tensor embed(const TokenGrid& grid, const EmbedParams& params, const Tensor& code_table);
Tensor station_gate(const Tensor& h, const EmbedParams& params);

}  // namespace windcast
