#pragma once

#include <utility>
#include <vector>

#include "windcast/graph.hpp"
#include "windcast/tensor.hpp"

namespace windcast {

/// Attention parameters, shared across all stations. Queries are not derived
/// from the input: they are learnable representatives of the forecast
/// patches (a temporal code per patch plus one broadcast feature code).
struct AttnParams {
  Tensor w_q, w_k, w_v;  // d x d
  Tensor q_time;         // M_pred x d
  Tensor q_feat;         // 1 x d
  std::size_t n_heads = 1;
};

/// Local-dynamics contexts and the attention map exported for attribution.
struct LocalContext {
  Tensor context;                  // S x M_pred x d (G)
  Tensor attn_mean;                // S x M_pred x N_all, head-averaged
  std::vector<Tensor> attn_heads;  // per-head maps
};

AttnParams init_attn_params(Rng& rng, std::size_t d, std::size_t m_pred, std::size_t n_heads);

/// Graph form of the query construction: (q_time + q_feat) W_Q tiled to all
/// stations (identical across stations by construction).
Graph::NodeId build_query_nodes(Graph& g, Graph::NodeId q_time, Graph::NodeId q_feat,
                                Graph::NodeId w_q, std::size_t s_count);

/// Value forms.
Tensor build_queries(const AttnParams& params, std::size_t s_count);
std::pair<Tensor, Tensor> project_kv(const Tensor& h_tilde, const AttnParams& params);
LocalContext attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads);

}  // namespace windcast
