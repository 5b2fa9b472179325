#include "windcast/transport.hpp"

#include <algorithm>
#include <cmath>

namespace windcast {

double median_offdiag_distance(const Tensor& distances) {
  std::vector<double> vals;
  const std::size_t s_count = distances.dim(0);
  vals.reserve(s_count * (s_count - 1));
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s != s0) vals.push_back(distances.at(s, s0));
    }
  }
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

PhysicsParams init_physics_params(const StationNetwork& network) {
  PhysicsParams p;
  p.alpha_dir_raw = Tensor::scalar(kernels::softplus_inverse(1.0));
  p.alpha_dist_raw = Tensor::scalar(kernels::softplus_inverse(1.0));
  p.beta_speed_raw = Tensor::scalar(kernels::softplus_inverse(1.0));
  p.sigma_d_raw = Tensor::scalar(
      kernels::softplus_inverse(std::max(1e-3, median_offdiag_distance(network.distances))));
  p.eps_margin_raw = Tensor::scalar(kernels::softplus_inverse(0.05));
  p.residual_adj = Tensor({network.size(), network.size()});
  return p;
}

Tensor physics_score(const Tensor& alignment, const Tensor& speed, const Tensor& distances,
                     double alpha_dir, double alpha_dist, double beta_speed, double sigma_d,
                     double eps) {
  Graph g;
  Graph::NodeId phi = op_physics_score(
      g, g.constant(Tensor::scalar(alpha_dir)), g.constant(Tensor::scalar(alpha_dist)),
      g.constant(Tensor::scalar(beta_speed)), g.constant(Tensor::scalar(sigma_d)),
      g.constant(Tensor::scalar(eps)), alignment, distances, speed);
  return g.value(phi);
}

Tensor physics_score(const Tensor& alignment, const Tensor& speed, const Tensor& distances,
                     const PhysicsParams& params) {
  return physics_score(alignment, speed, distances, params.alpha_dir(), params.alpha_dist(),
                       params.beta_speed(), params.sigma_d(), params.eps_margin());
}

Tensor upwind_mask(const Tensor& alignment, double eps) {
  if (eps < 0.0) throw ConfigError("upwind margin must be nonnegative");
  const std::size_t s_count = alignment.dim(0);
  Tensor m({s_count, s_count});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s != s0 && alignment.at(s, s0) >= eps) m.at(s, s0) = 1.0;
    }
  }
  return m;
}

Tensor spatial_weights(const Tensor& logits, const Tensor& mask) {
  return kernels::masked_row_softmax(logits, mask);
}

Tensor aggregate(const std::vector<Tensor>& weights_per_patch, const Tensor& context) {
  Graph g;
  std::vector<Graph::NodeId> ws;
  ws.reserve(weights_per_patch.size());
  for (const Tensor& w : weights_per_patch) ws.push_back(g.constant(w));
  Graph::NodeId out = op_transport_mix(g, ws, g.constant(context));
  return g.value(out);
}

namespace {

Tensor patch_speed_vector(const WindSummary& wind, std::size_t patch, std::size_t s_count) {
  if (!wind.per_station()) return Tensor({1}, {wind.speed.at(patch, 0)});
  Tensor v({s_count});
  for (std::size_t s = 0; s < s_count; ++s) v[s] = wind.speed.at(patch, s);
  return v;
}

bool patch_is_calm(const Tensor& speed) {
  for (std::size_t i = 0; i < speed.numel(); ++i) {
    if (speed[i] > 0.0) return false;
  }
  return true;
}

Tensor mask_for_patch(const Tensor& alignment, const Tensor& speed, double eps) {
  // no advection without wind, whatever the margin
  if (patch_is_calm(speed)) return Tensor(alignment.shape());
  Tensor m = upwind_mask(alignment, eps);
  if (speed.numel() > 1) {
    // per-station wind: a calm target row cannot receive transport
    for (std::size_t s = 0; s < m.dim(0); ++s) {
      if (speed[s] > 0.0) continue;
      for (std::size_t s0 = 0; s0 < m.dim(1); ++s0) m.at(s, s0) = 0.0;
    }
  }
  return m;
}

}  // namespace

TransportPlan make_plan(const WindSummary& wind, std::size_t patch, const StationNetwork& network,
                        const PhysicsParams& params) {
  TransportPlan plan;
  Tensor alignment = wind_alignment(wind, patch, network.bearings);
  Tensor speed = patch_speed_vector(wind, patch, network.size());
  plan.phi = physics_score(alignment, speed, network.distances, params);
  plan.logits = Tensor(plan.phi.shape());
  for (std::size_t i = 0; i < plan.logits.numel(); ++i) {
    plan.logits[i] = plan.phi[i] + params.residual_adj[i];
  }
  plan.mask = mask_for_patch(alignment, speed, params.eps_margin());
  plan.weights = spatial_weights(plan.logits, plan.mask);
  return plan;
}

TransportPatchNodes build_transport_patch(Graph& g, Graph::NodeId a_dir, Graph::NodeId a_dist,
                                          Graph::NodeId beta, Graph::NodeId sigma,
                                          Graph::NodeId eps, Graph::NodeId residual_adj,
                                          const WindSummary& wind, std::size_t patch,
                                          const StationNetwork& network) {
  Tensor alignment = wind_alignment(wind, patch, network.bearings);
  Tensor speed = patch_speed_vector(wind, patch, network.size());
  Graph::NodeId phi = op_physics_score(g, a_dir, a_dist, beta, sigma, eps, alignment,
                                       network.distances, speed);
  Graph::NodeId logits = op_add(g, phi, residual_adj);
  Tensor mask = mask_for_patch(alignment, speed, g.value(eps).item());
  Graph::NodeId weights = op_masked_row_softmax(g, logits, mask);
  TransportPatchNodes nodes;
  nodes.weights = weights;
  nodes.phi = g.value(phi);
  nodes.logits = g.value(logits);
  nodes.mask = std::move(mask);
  return nodes;
}

}  // namespace windcast
