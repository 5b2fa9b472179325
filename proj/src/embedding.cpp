#include "windcast/embedding.hpp"

#include <cmath>

namespace windcast {

EmbedParams init_embed_params(Rng& rng, std::size_t s_count, std::size_t patch_len,
                              std::size_t d) {
  EmbedParams p;
  p.w_proj = randn(rng, {patch_len, d}, 0.02);
  p.conv_kernel = randn(rng, {3, d}, 0.02);
  p.station_embed = randn(rng, {s_count, d}, 0.02);
  p.station_gain = Tensor::full({s_count, d}, 1.0);
  p.station_bias = Tensor({s_count, d});
  return p;
}

TokenGrid tokenize(const WindowSample& sample, std::size_t patch_len) {
  if (patch_len == 0) throw ConfigError("patch length must be positive");
  if (sample.x.empty()) throw ConfigError("window has no features");
  const std::size_t s_count = sample.x.front().dim(0);

  std::size_t n_all = 0;
  for (const Tensor& block : sample.x) {
    if (block.dim(1) % patch_len != 0) {
      throw ConfigError("feature block length is not divisible by the patch length");
    }
    n_all += block.dim(1) / patch_len;
  }

  TokenGrid grid;
  grid.values = Tensor({s_count, n_all, patch_len});
  grid.meta.reserve(n_all);
  std::size_t token = 0;
  for (std::size_t f = 0; f < sample.x.size(); ++f) {
    const Tensor& block = sample.x[f];
    const std::size_t patches = block.dim(1) / patch_len;
    grid.segments.emplace_back(token, token + patches);
    for (std::size_t p = 0; p < patches; ++p) {
      grid.meta.push_back({f, p});
      for (std::size_t s = 0; s < s_count; ++s) {
        for (std::size_t h = 0; h < patch_len; ++h) {
          grid.values.at(s, token, h) = block.at(s, p * patch_len + h);
        }
      }
      ++token;
    }
  }
  return grid;
}

Tensor feature_code_table(std::size_t feature_count, std::size_t d) {
  Tensor table({feature_count, d});
  for (std::size_t f = 0; f < feature_count; ++f) {
    for (std::size_t c = 0; c < d; ++c) {
      double exponent = static_cast<double>(2 * (c / 2)) / static_cast<double>(d);
      double angle = static_cast<double>(f) / std::pow(10000.0, exponent);
      table.at(f, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

namespace {

Tensor expand_codes(const TokenGrid& grid, const Tensor& code_table) {
  const std::size_t s_count = grid.values.dim(0);
  const std::size_t n_all = grid.values.dim(1);
  const std::size_t d = code_table.dim(1);
  Tensor codes({s_count, n_all, d});
  for (std::size_t t = 0; t < n_all; ++t) {
    std::size_t f = grid.meta[t].feature;
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t c = 0; c < d; ++c) codes.at(s, t, c) = code_table.at(f, c);
    }
  }
  return codes;
}

}  // namespace

Graph::NodeId build_embedding(Graph& g, Graph::NodeId tokens, Graph::NodeId w_proj,
                              Graph::NodeId conv_kernel, const TokenGrid& grid,
                              const Tensor& code_table) {
  Graph::NodeId projected = op_batch_matmul(g, tokens, w_proj);
  Graph::NodeId conv = op_depthwise_conv3(g, projected, conv_kernel, grid.segments);
  Graph::NodeId with_conv = op_add(g, projected, conv);
  Graph::NodeId codes = g.constant(expand_codes(grid, code_table));
  return op_add(g, with_conv, codes);
}

Tensor embed(const TokenGrid& grid, const EmbedParams& params, const Tensor& code_table) {
  Graph g;
  Graph::NodeId h = build_embedding(g, g.constant(grid.values), g.constant(params.w_proj),
                                    g.constant(params.conv_kernel), grid, code_table);
  return g.value(h);
}

Tensor station_gate(const Tensor& h, const EmbedParams& params) {
  Graph g;
  Graph::NodeId out =
      op_station_affine(g, g.constant(h), g.constant(params.station_gain),
                        g.constant(params.station_embed), g.constant(params.station_bias));
  return g.value(out);
}

}  // namespace windcast
