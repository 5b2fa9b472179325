#pragma once

#include <vector>

#include "windcast/geometry.hpp"
#include "windcast/graph.hpp"
#include "windcast/tensor.hpp"

namespace windcast {

/// Physics coefficients of the transport kernel. The positive scalars are
/// stored as unconstrained reals and mapped through softplus; the residual
/// adjacency U is free. The fusion gate gamma lives here too so that every
/// station-indexed parameter of the transport path sits in one place.
struct PhysicsParams {
  Tensor alpha_dir_raw;   // scalar
  Tensor alpha_dist_raw;  // scalar
  Tensor beta_speed_raw;  // scalar
  Tensor sigma_d_raw;     // scalar, maps to km
  Tensor eps_margin_raw;  // scalar, alignment margin
  Tensor residual_adj;    // S x S (U)

  double alpha_dir() const { return kernels::softplus(alpha_dir_raw.item()); }
  double alpha_dist() const { return kernels::softplus(alpha_dist_raw.item()); }
  double beta_speed() const { return kernels::softplus(beta_speed_raw.item()); }
  double sigma_d() const { return kernels::softplus(sigma_d_raw.item()); }
  double eps_margin() const { return kernels::softplus(eps_margin_raw.item()); }
};

/// One forecast patch worth of transport state.
struct TransportPlan {
  Tensor phi;      // S x S physics scores
  Tensor logits;   // S x S, phi + U (Z)
  Tensor mask;     // S x S binary
  Tensor weights;  // S x S row-normalized (W_sp)
};

/// sigma_d starts at the median off-diagonal distance; the directional and
/// distance coefficients at 1, the margin at 0.05, U at zero.
PhysicsParams init_physics_params(const StationNetwork& network);

double median_offdiag_distance(const Tensor& distances);

/// Phi = beta * v * alpha_dir * [A - eps]_+ - alpha_dist * (D / sigma)^2.
Tensor physics_score(const Tensor& alignment, const Tensor& speed, const Tensor& distances,
                     const PhysicsParams& params);

/// Same score over already-mapped coefficient values.
Tensor physics_score(const Tensor& alignment, const Tensor& speed, const Tensor& distances,
                     double alpha_dir, double alpha_dist, double beta_speed, double sigma_d,
                     double eps);

/// M[s][s0] = 1 iff s != s0 and alignment >= eps.
Tensor upwind_mask(const Tensor& alignment, double eps);

/// Row softmax of Z over unmasked entries; masked entries are exactly zero
/// and fully masked rows stay all-zero.
Tensor spatial_weights(const Tensor& logits, const Tensor& mask);

/// C_nb[:, m, :] = W_m . G[:, m, :].
Tensor aggregate(const std::vector<Tensor>& weights_per_patch, const Tensor& context);

/// Full per-patch plan at the current parameter values (value form).
TransportPlan make_plan(const WindSummary& wind, std::size_t patch, const StationNetwork& network,
                        const PhysicsParams& params);

/// Graph form. Scalar nodes are the already softplus-mapped coefficients;
/// the mask is computed from the current margin value and treated as a
/// constant of the forward pass. A calm patch (every wind row at speed 0)
/// forces an all-zero mask so transport shuts off.
struct TransportPatchNodes {
  Graph::NodeId weights;
  Tensor phi;
  Tensor logits;
  Tensor mask;
};
TransportPatchNodes build_transport_patch(Graph& g, Graph::NodeId a_dir, Graph::NodeId a_dist,
                                          Graph::NodeId beta, Graph::NodeId sigma,
                                          Graph::NodeId eps, Graph::NodeId residual_adj,
                                          const WindSummary& wind, std::size_t patch,
                                          const StationNetwork& network);

}  // namespace windcast
