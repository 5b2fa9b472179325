#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "windcast/dataio.hpp"
#include "windcast/decoder.hpp"
#include "windcast/embedding.hpp"
#include "windcast/geometry.hpp"
#include "windcast/graph.hpp"
#include "windcast/local_encoder.hpp"
#include "windcast/transport.hpp"

namespace windcast {

struct ModelConfig {
  std::size_t d = 16;
  std::size_t n_heads = 2;
  std::size_t patch_len = 12;
  std::size_t horizon = 24;
  std::size_t lookback = 0;  // 0 -> horizon + 24
  Activation activation = Activation::kIdentity;
  bool per_channel_gate = false;
  bool per_station_wind = false;
  bool transport_enabled = true;
  bool add_calendar = true;
};

/// Everything shape-like that is fixed once the feature list is known.
struct ModelLayout {
  std::size_t s_count = 0;
  std::size_t d = 0;
  std::size_t n_heads = 1;
  std::size_t patch_len = 12;
  std::size_t horizon = 24;
  std::size_t lookback = 48;
  std::size_t m_pred = 2;
  std::size_t n_all = 0;
  std::vector<FeatureSpec> specs;
  std::vector<std::size_t> tokens_per_feature;
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  Tensor feature_codes;  // F x d, fixed sinusoidal (tests may override)
  Activation activation = Activation::kIdentity;
  bool per_channel_gate = false;
  bool transport_enabled = true;
  bool per_station_wind = false;
};

ModelLayout make_layout(const ModelConfig& cfg, const std::vector<FeatureSpec>& specs,
                        std::size_t s_count);

/// Union of every trainable tensor, enumerated in a fixed order under stable
/// names for checkpoints and the optimizer state.
struct ModelParams {
  EmbedParams embed;
  AttnParams attn;
  PhysicsParams physics;
  DecoderParams decoder;

  std::vector<std::pair<std::string, Tensor*>> enumerate();
  std::vector<std::pair<std::string, const Tensor*>> enumerate() const;
};

ModelParams init_params(const ModelLayout& layout, const StationNetwork& network,
                        std::uint64_t seed);

/// Value snapshots of one forward pass: the forecast plus both attribution
/// channels and the per-patch transport plans.
struct ForecastBundle {
  Tensor y_hat;  // S x H, normalized units
  Tensor attn_mean;
  std::vector<Tensor> attn_heads;
  std::vector<TransportPlan> plans;
  Tensor local_ctx;        // G
  Tensor transported_ctx;  // C_nb (empty when transport disabled)
  Tensor gamma;
};

struct ModelGraph {
  Graph graph;
  Graph::NodeId y_hat = 0;
  Graph::NodeId loss = 0;
  bool has_loss = false;
  std::vector<Graph::NodeId> param_nodes;  // aligned with ModelParams::enumerate()
  ForecastBundle bundle;
};

/// Builds the whole forward graph for one window. When `target` is non-null
/// the composite loss node (MSE + lambda_eps * eps^2 with transport enabled)
/// is added. `requires_grad` controls whether parameter leaves join the tape.
ModelGraph build_forward(const ModelLayout& layout, const ModelParams& params,
                         const StationNetwork& network, const WindowSample& sample,
                         const Tensor* target, double lambda_eps, bool requires_grad);

/// Plain inference forward.
ForecastBundle forward(const ModelLayout& layout, const ModelParams& params,
                       const StationNetwork& network, const WindowSample& sample);

}  // namespace windcast
