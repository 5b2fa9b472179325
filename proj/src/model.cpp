#include "windcast/model.hpp"

namespace windcast {

ModelLayout make_layout(const ModelConfig& cfg, const std::vector<FeatureSpec>& specs,
                        std::size_t s_count) {
  ModelLayout layout;
  layout.s_count = s_count;
  layout.d = cfg.d;
  layout.n_heads = cfg.n_heads;
  layout.patch_len = cfg.patch_len;
  layout.horizon = cfg.horizon;
  layout.lookback = cfg.lookback == 0 ? cfg.horizon + 24 : cfg.lookback;
  layout.activation = cfg.activation;
  layout.per_channel_gate = cfg.per_channel_gate;
  layout.transport_enabled = cfg.transport_enabled;
  layout.per_station_wind = cfg.per_station_wind;

  if (cfg.d == 0) throw ConfigError("embedding dimension must be positive");
  if (cfg.n_heads == 0 || cfg.d % cfg.n_heads != 0) {
    throw ConfigError("attention head count must divide the embedding dimension");
  }
  if (cfg.patch_len == 0 || layout.horizon % cfg.patch_len != 0 ||
      layout.lookback % cfg.patch_len != 0) {
    throw ConfigError("patch length must divide both the look-back and the horizon");
  }
  validate_specs(specs, layout.horizon, layout.patch_len, layout.transport_enabled);

  layout.m_pred = layout.horizon / layout.patch_len;
  layout.specs = specs;
  std::size_t token = 0;
  for (const FeatureSpec& f : specs) {
    std::size_t patches = (layout.lookback + f.availability) / layout.patch_len;
    layout.tokens_per_feature.push_back(patches);
    layout.segments.emplace_back(token, token + patches);
    token += patches;
  }
  layout.n_all = token;
  layout.feature_codes = feature_code_table(specs.size(), layout.d);
  return layout;
}

ModelParams init_params(const ModelLayout& layout, const StationNetwork& network,
                        std::uint64_t seed) {
  if (network.size() != layout.s_count) throw ConfigError("network size does not match layout");
  Rng rng(seed);
  ModelParams p;
  p.embed = init_embed_params(rng, layout.s_count, layout.patch_len, layout.d);
  p.attn = init_attn_params(rng, layout.d, layout.m_pred, layout.n_heads);
  p.physics = init_physics_params(network);
  p.decoder = init_decoder_params(rng, layout.s_count, layout.d, layout.patch_len,
                                  layout.activation, layout.per_channel_gate);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::enumerate() {
  return {
      {"embed.w_proj", &embed.w_proj},
      {"embed.conv_kernel", &embed.conv_kernel},
      {"embed.station_embed", &embed.station_embed},
      {"embed.station_gain", &embed.station_gain},
      {"embed.station_bias", &embed.station_bias},
      {"attn.w_q", &attn.w_q},
      {"attn.w_k", &attn.w_k},
      {"attn.w_v", &attn.w_v},
      {"attn.q_time", &attn.q_time},
      {"attn.q_feat", &attn.q_feat},
      {"physics.alpha_dir_raw", &physics.alpha_dir_raw},
      {"physics.alpha_dist_raw", &physics.alpha_dist_raw},
      {"physics.beta_speed_raw", &physics.beta_speed_raw},
      {"physics.sigma_d_raw", &physics.sigma_d_raw},
      {"physics.eps_margin_raw", &physics.eps_margin_raw},
      {"physics.residual_adj", &physics.residual_adj},
      {"decoder.gamma", &decoder.gamma},
      {"decoder.w_dec", &decoder.w_dec},
      {"decoder.b_dec", &decoder.b_dec},
  };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::enumerate() const {
  auto mutable_view = const_cast<ModelParams*>(this)->enumerate();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, ptr] : mutable_view) out.emplace_back(name, ptr);
  return out;
}

ModelGraph build_forward(const ModelLayout& layout, const ModelParams& params,
                         const StationNetwork& network, const WindowSample& sample,
                         const Tensor* target, double lambda_eps, bool requires_grad) {
  TokenGrid grid = tokenize(sample, layout.patch_len);
  if (grid.values.dim(1) != layout.n_all || grid.values.dim(0) != layout.s_count) {
    throw ShapeError("window does not match the model layout");
  }
  if (layout.transport_enabled && sample.wind.patches() != layout.m_pred) {
    throw ShapeError("wind summary does not cover every forecast patch");
  }

  ModelGraph mg;
  Graph& g = mg.graph;

  auto named = params.enumerate();
  std::vector<Graph::NodeId> leaves(named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    leaves[i] = g.leaf(*named[i].second, requires_grad);
  }
  mg.param_nodes = leaves;
  auto leaf_of = [&](const char* name) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      if (named[i].first == name) return leaves[i];
    }
    throw ConfigError(std::string("unknown parameter ") + name);
  };

  // embedding (Eq. 4) and station gate (Eq. 5)
  Graph::NodeId tokens = g.constant(grid.values);
  Graph::NodeId h = build_embedding(g, tokens, leaf_of("embed.w_proj"),
                                    leaf_of("embed.conv_kernel"), grid, layout.feature_codes);
  Graph::NodeId h_tilde =
      op_station_affine(g, h, leaf_of("embed.station_gain"), leaf_of("embed.station_embed"),
                        leaf_of("embed.station_bias"));

  // local dynamics encoder (Eqs. 6-9)
  Graph::NodeId q = build_query_nodes(g, leaf_of("attn.q_time"), leaf_of("attn.q_feat"),
                                      leaf_of("attn.w_q"), layout.s_count);
  Graph::NodeId k = op_batch_matmul(g, h_tilde, leaf_of("attn.w_k"));
  Graph::NodeId v = op_batch_matmul(g, h_tilde, leaf_of("attn.w_v"));
  AttentionNodes attn = op_attention(g, q, k, v, layout.n_heads);
  mg.bundle.attn_mean = attn.attn_mean;
  mg.bundle.attn_heads = attn.attn_heads;
  mg.bundle.local_ctx = g.value(attn.context);

  // transport (Eqs. 10-14) and fusion (Eq. 15)
  Graph::NodeId fused = attn.context;
  Graph::NodeId eps_node = 0;
  bool have_eps = false;
  if (layout.transport_enabled) {
    Graph::NodeId a_dir = op_softplus(g, leaf_of("physics.alpha_dir_raw"));
    Graph::NodeId a_dist = op_softplus(g, leaf_of("physics.alpha_dist_raw"));
    Graph::NodeId beta = op_softplus(g, leaf_of("physics.beta_speed_raw"));
    Graph::NodeId sigma = op_softplus(g, leaf_of("physics.sigma_d_raw"));
    eps_node = op_softplus(g, leaf_of("physics.eps_margin_raw"));
    have_eps = true;
    std::vector<Graph::NodeId> weight_nodes;
    weight_nodes.reserve(layout.m_pred);
    for (std::size_t m = 0; m < layout.m_pred; ++m) {
      TransportPatchNodes patch =
          build_transport_patch(g, a_dir, a_dist, beta, sigma, eps_node,
                                leaf_of("physics.residual_adj"), sample.wind, m, network);
      TransportPlan plan;
      plan.phi = std::move(patch.phi);
      plan.logits = std::move(patch.logits);
      plan.mask = std::move(patch.mask);
      plan.weights = g.value(patch.weights);
      mg.bundle.plans.push_back(std::move(plan));
      weight_nodes.push_back(patch.weights);
    }
    Graph::NodeId c_nb = op_transport_mix(g, weight_nodes, attn.context);
    mg.bundle.transported_ctx = g.value(c_nb);
    fused = op_fuse_gate(g, attn.context, c_nb, leaf_of("decoder.gamma"));
  }
  mg.bundle.gamma = params.decoder.gamma;

  // decoding head (Eqs. 16-17)
  Graph::NodeId y_patch =
      build_decode(g, fused, leaf_of("decoder.w_dec"), leaf_of("decoder.b_dec"),
                   layout.activation);
  mg.y_hat = op_reshape(g, y_patch, {layout.s_count, layout.horizon});
  mg.bundle.y_hat = g.value(mg.y_hat);

  if (target != nullptr) {
    if (!target->all_finite()) throw NumericError("target contains non-finite values");
    Graph::NodeId mse = op_mse(g, mg.y_hat, *target);
    mg.loss = (have_eps && lambda_eps != 0.0)
                  ? op_add_scaled_square(g, mse, eps_node, lambda_eps)
                  : mse;
    mg.has_loss = true;
  }
  return mg;
}

ForecastBundle forward(const ModelLayout& layout, const ModelParams& params,
                       const StationNetwork& network, const WindowSample& sample) {
  ModelGraph mg = build_forward(layout, params, network, sample, nullptr, 0.0, false);
  return std::move(mg.bundle);
}

}  // namespace windcast
