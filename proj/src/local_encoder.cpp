#include "windcast/local_encoder.hpp"

namespace windcast {

AttnParams init_attn_params(Rng& rng, std::size_t d, std::size_t m_pred, std::size_t n_heads) {
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("attention head count must divide the embedding dimension");
  }
  AttnParams p;
  p.w_q = randn(rng, {d, d}, 0.02);
  p.w_k = randn(rng, {d, d}, 0.02);
  p.w_v = randn(rng, {d, d}, 0.02);
  p.q_time = randn(rng, {m_pred, d}, 0.02);
  p.q_feat = randn(rng, {1, d}, 0.02);
  p.n_heads = n_heads;
  return p;
}

Graph::NodeId build_query_nodes(Graph& g, Graph::NodeId q_time, Graph::NodeId q_feat,
                                Graph::NodeId w_q, std::size_t s_count) {
  Graph::NodeId emb = op_add_rowbcast(g, q_time, q_feat);
  Graph::NodeId q = op_matmul(g, emb, w_q);
  return op_tile_stations(g, q, s_count);
}

Tensor build_queries(const AttnParams& params, std::size_t s_count) {
  Graph g;
  Graph::NodeId q = build_query_nodes(g, g.constant(params.q_time), g.constant(params.q_feat),
                                      g.constant(params.w_q), s_count);
  return g.value(q);
}

std::pair<Tensor, Tensor> project_kv(const Tensor& h_tilde, const AttnParams& params) {
  Graph g;
  Graph::NodeId h = g.constant(h_tilde);
  Graph::NodeId k = op_batch_matmul(g, h, g.constant(params.w_k));
  Graph::NodeId v = op_batch_matmul(g, h, g.constant(params.w_v));
  return {g.value(k), g.value(v)};
}

LocalContext attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
  Graph g;
  AttentionNodes nodes = op_attention(g, g.constant(q), g.constant(k), g.constant(v), n_heads);
  LocalContext ctx;
  ctx.context = g.value(nodes.context);
  ctx.attn_mean = std::move(nodes.attn_mean);
  ctx.attn_heads = std::move(nodes.attn_heads);
  return ctx;
}

}  // namespace windcast
