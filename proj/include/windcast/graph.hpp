#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "windcast/tensor.hpp"

namespace windcast {

enum class Activation { kIdentity, kGelu, kSoftplus };

/// Reverse-mode tape. Nodes are created in topological order by the op
/// helpers below; backward() walks the tape in reverse and accumulates
/// gradients into every node that (transitively) depends on a leaf created
/// with requires_grad = true.
class Graph {
 public:
  using NodeId = std::uint32_t;
  using BackFn = std::function<void(Graph&, NodeId)>;

  NodeId leaf(Tensor value, bool requires_grad);
  NodeId constant(Tensor value) { return leaf(std::move(value), false); }

  NodeId add_node(Tensor value, std::vector<NodeId> parents, BackFn back);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  Tensor& grad(NodeId id) { return nodes_[id].grad; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  bool needs_grad(NodeId id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and runs every backward closure in reverse
  /// creation order. `root` must be a single-element node.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> parents;
    BackFn back;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Op helpers. Each computes the forward value eagerly and registers the
// matching backward closure. Shapes are validated on entry.
// ---------------------------------------------------------------------------

/// Elementwise a + b, same shape.
Graph::NodeId op_add(Graph& g, Graph::NodeId a, Graph::NodeId b);

/// a (M x d) + b (1 x d) broadcast over rows.
Graph::NodeId op_add_rowbcast(Graph& g, Graph::NodeId a, Graph::NodeId b);

/// c * a for a compile-time constant c.
Graph::NodeId op_scale(Graph& g, Graph::NodeId a, double c);

/// 2-D matrix product (N x K) . (K x M).
Graph::NodeId op_matmul(Graph& g, Graph::NodeId a, Graph::NodeId b);

/// Batched product (B x N x K) . (K x M) with a shared right factor.
Graph::NodeId op_batch_matmul(Graph& g, Graph::NodeId x, Graph::NodeId w);

/// Station-wise affine gate: out[s,n,c] = gain[s,c] * (h[s,n,c] + embed[s,c]) + bias[s,c].
Graph::NodeId op_station_affine(Graph& g, Graph::NodeId h, Graph::NodeId gain,
                                Graph::NodeId embed, Graph::NodeId bias);

/// Depthwise width-3 convolution over the token axis, run independently
/// inside each [begin, end) token segment with zero padding at segment edges.
Graph::NodeId op_depthwise_conv3(Graph& g, Graph::NodeId x, Graph::NodeId kernel,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& segments);

/// Replicates an (M x d) matrix to (S x M x d); backward sums over stations.
Graph::NodeId op_tile_stations(Graph& g, Graph::NodeId x, std::size_t s_count);

struct AttentionNodes {
  Graph::NodeId context;            // S x M x d
  Tensor attn_mean;                 // S x M x N, head-averaged weights
  std::vector<Tensor> attn_heads;   // per-head weights, same shape
};

/// Scaled dot-product attention with learnable queries: per head,
/// A = softmax(Q K^T / sqrt(d_k)) and context = A V; heads are concatenated.
AttentionNodes op_attention(Graph& g, Graph::NodeId q, Graph::NodeId k, Graph::NodeId v,
                            std::size_t n_heads);

/// Elementwise softplus ln(1 + e^x).
Graph::NodeId op_softplus(Graph& g, Graph::NodeId x);

/// Physics score of the transport kernel (inputs already positive-mapped):
/// phi[s,s0] = beta * v[s] * a_dir * max(0, align[s,s0] - eps) - a_dist * (D[s,s0]/sigma)^2.
/// `speed` has 1 entry (network wind) or S entries (per-station).
Graph::NodeId op_physics_score(Graph& g, Graph::NodeId a_dir, Graph::NodeId a_dist,
                               Graph::NodeId beta, Graph::NodeId sigma, Graph::NodeId eps,
                               const Tensor& alignment, const Tensor& distances,
                               const Tensor& speed);

/// Row softmax over unmasked entries only; masked outputs are exactly 0 and
/// fully masked rows come out all-zero.
Graph::NodeId op_masked_row_softmax(Graph& g, Graph::NodeId z, const Tensor& mask);

/// C_nb[s,m,:] = sum_s0 W_m[s,s0] G[s0,m,:] for per-patch weight nodes.
Graph::NodeId op_transport_mix(Graph& g, const std::vector<Graph::NodeId>& weights,
                               Graph::NodeId context);

/// Fusion gate: out = g + gamma (*) c_nb with gamma per station (S) or per
/// station-channel (S x d). Stations with a gate of exactly 0 copy g through.
Graph::NodeId op_fuse_gate(Graph& g, Graph::NodeId local, Graph::NodeId neighbor,
                           Graph::NodeId gamma);

/// Adds a bias vector over the last axis.
Graph::NodeId op_add_bias(Graph& g, Graph::NodeId x, Graph::NodeId bias);

Graph::NodeId op_activation(Graph& g, Graph::NodeId x, Activation kind);

Graph::NodeId op_reshape(Graph& g, Graph::NodeId x, std::vector<std::size_t> shape);

/// Mean squared error against a constant target.
Graph::NodeId op_mse(Graph& g, Graph::NodeId pred, const Tensor& target);

/// Scalar a + coeff * b^2 (used for the margin regularizer).
Graph::NodeId op_add_scaled_square(Graph& g, Graph::NodeId a, Graph::NodeId b, double coeff);

// Value-level kernels shared by the ops and by the module-level functions.
namespace kernels {
Tensor softplus(const Tensor& x);
double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);
Tensor activation(const Tensor& x, Activation kind);
Tensor masked_row_softmax(const Tensor& z, const Tensor& mask);
}  // namespace kernels

}  // namespace windcast
