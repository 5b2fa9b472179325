#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "windcast/embedding.hpp"

using namespace windcast;

namespace {

WindowSample make_sample(std::size_t s_count, const std::vector<std::size_t>& block_lens,
                         std::uint64_t seed) {
  WindowSample w;
  Rng rng(seed);
  for (std::size_t len : block_lens) w.x.push_back(randn(rng, {s_count, len}, 1.0));
  return w;
}

}  // namespace

TEST_CASE("tokenize: per-feature patch counts and segment order") {
  // L = 48, m = (0, 24, 24), P = 12 -> counts (4, 6, 6), N_all = 16
  WindowSample w = make_sample(2, {48, 72, 72}, 1);
  TokenGrid grid = tokenize(w, 12);
  CHECK(grid.values.dim(0) == 2);
  CHECK(grid.values.dim(1) == 16);
  CHECK(grid.values.dim(2) == 12);
  REQUIRE(grid.segments.size() == 3);
  CHECK(grid.segments[0] == std::pair<std::size_t, std::size_t>{0, 4});
  CHECK(grid.segments[1] == std::pair<std::size_t, std::size_t>{4, 10});
  CHECK(grid.segments[2] == std::pair<std::size_t, std::size_t>{10, 16});
  CHECK(grid.meta[0].feature == 0);
  CHECK(grid.meta[4].feature == 1);
  CHECK(grid.meta[4].patch == 0);
  CHECK(grid.meta[15].patch == 5);
}

TEST_CASE("tokenize: partition reproduces the input hours exactly") {
  WindowSample w = make_sample(1, {24}, 2);
  TokenGrid grid = tokenize(w, 12);
  REQUIRE(grid.values.dim(1) == 2);
  for (std::size_t h = 0; h < 24; ++h) {
    CHECK(grid.values.at(0, h / 12, h % 12) == w.x[0].at(0, h));
  }
}

TEST_CASE("tokenize: indivisible block length is a ConfigError") {
  WindowSample w = make_sample(1, {48}, 3);
  CHECK_THROWS_AS(tokenize(w, 5), ConfigError);
}

TEST_CASE("embed: zero input and zero conv leave only the feature codes") {
  WindowSample w = make_sample(2, {24, 24}, 4);
  for (Tensor& block : w.x) block.fill(0.0);
  TokenGrid grid = tokenize(w, 12);

  Rng rng(5);
  EmbedParams p = init_embed_params(rng, 2, 12, 6);
  p.conv_kernel.fill(0.0);
  Tensor codes = feature_code_table(2, 6);
  Tensor h = embed(grid, p, codes);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t t = 0; t < grid.values.dim(1); ++t) {
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(h.at(s, t, c) == doctest::Approx(codes.at(grid.meta[t].feature, c)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("embed: stations with identical inputs produce identical rows") {
  WindowSample w = make_sample(3, {36, 48}, 6);
  for (Tensor& block : w.x) {
    for (std::size_t s = 1; s < 3; ++s) {
      for (std::size_t t = 0; t < block.dim(1); ++t) block.at(s, t) = block.at(0, t);
    }
  }
  TokenGrid grid = tokenize(w, 12);
  Rng rng(7);
  EmbedParams p = init_embed_params(rng, 3, 12, 8);
  Tensor h = embed(grid, p, feature_code_table(2, 8));
  for (std::size_t s = 1; s < 3; ++s) {
    for (std::size_t t = 0; t < h.dim(1); ++t) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(h.at(s, t, c) == h.at(0, t, c));
      }
    }
  }
}

TEST_CASE("embed: identity projection with zero conv and zero codes passes tokens through") {
  WindowSample w = make_sample(1, {24}, 8);
  TokenGrid grid = tokenize(w, 12);
  EmbedParams p;
  p.w_proj = Tensor({12, 12});
  for (std::size_t i = 0; i < 12; ++i) p.w_proj.at(i, i) = 1.0;
  p.conv_kernel = Tensor({3, 12});
  p.station_embed = Tensor({1, 12});
  p.station_gain = Tensor::full({1, 12}, 1.0);
  p.station_bias = Tensor({1, 12});
  Tensor h = embed(grid, p, Tensor({1, 12}));  // zeroed code table
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t c = 0; c < 12; ++c) {
      CHECK(h.at(0, t, c) == grid.values.at(0, t, c));
    }
  }
}

TEST_CASE("station_gate: identity, collapse and hand evaluation") {
  WindowSample w = make_sample(2, {24}, 9);
  TokenGrid grid = tokenize(w, 12);
  Rng rng(10);
  EmbedParams p = init_embed_params(rng, 2, 12, 4);
  Tensor h = embed(grid, p, feature_code_table(1, 4));

  // gamma = 1, B = 0, E = 0 -> identity
  p.station_embed.fill(0.0);
  Tensor gated = station_gate(h, p);
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK(gated[i] == h[i]);

  // gamma = 0 -> output is the bias, independent of the input
  EmbedParams collapsed = p;
  collapsed.station_gain.fill(0.0);
  collapsed.station_bias.fill(0.37);
  Tensor b = station_gate(h, collapsed);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(b[i] == doctest::Approx(0.37));

  // scalar case: gain 2, embed e, bias b -> 2 (h + e) + b
  EmbedParams scalar;
  scalar.station_gain = Tensor({1, 1}, {2.0});
  scalar.station_embed = Tensor({1, 1}, {0.5});
  scalar.station_bias = Tensor({1, 1}, {-1.0});
  Tensor hin({1, 1, 1}, {3.0});
  CHECK(station_gate(hin, scalar).at(0, 0, 0) == doctest::Approx(2.0 * (3.0 + 0.5) - 1.0));
}

TEST_CASE("token locality: one perturbed hour touches at most 3 tokens of its feature") {
  WindowSample w = make_sample(1, {48, 36}, 11);
  Rng rng(12);
  EmbedParams p = init_embed_params(rng, 1, 12, 6);
  Tensor codes = feature_code_table(2, 6);
  TokenGrid base_grid = tokenize(w, 12);
  Tensor base = embed(base_grid, p, codes);

  for (auto [feature, hour] : {std::pair<std::size_t, std::size_t>{0, 17}, {1, 0}, {1, 35}}) {
    WindowSample w2 = w;
    w2.x[feature].at(0, hour) += 2.0;
    TokenGrid grid = tokenize(w2, 12);
    Tensor h = embed(grid, p, codes);

    std::set<std::size_t> changed;
    for (std::size_t t = 0; t < h.dim(1); ++t) {
      for (std::size_t c = 0; c < 6; ++c) {
        if (h.at(0, t, c) != base.at(0, t, c)) changed.insert(t);
      }
    }
    auto [seg_begin, seg_end] = grid.segments[feature];
    std::size_t patch_token = seg_begin + hour / 12;
    for (std::size_t t : changed) {
      CHECK(t >= seg_begin);
      CHECK(t < seg_end);
      CHECK(static_cast<long>(t) >= static_cast<long>(patch_token) - 1);
      CHECK(t <= patch_token + 1);
    }
    CHECK(changed.count(patch_token) == 1);
  }
}

TEST_CASE("feature codes are injective for up to 64 features") {
  const std::size_t d = 16;
  Tensor codes = feature_code_table(64, d);
  for (std::size_t a = 0; a < 64; ++a) {
    for (std::size_t b = a + 1; b < 64; ++b) {
      double diff = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        diff = std::max(diff, std::abs(codes.at(a, c) - codes.at(b, c)));
      }
      CHECK(diff > 1e-6);
    }
  }
}

TEST_CASE("embedding shapes are S x N_all x d for random configs") {
  Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t s_count = 1 + rng.uniform_index(4);
    std::size_t d = 2 + rng.uniform_index(12);
    std::size_t f_count = 1 + rng.uniform_index(3);
    std::vector<std::size_t> lens;
    for (std::size_t f = 0; f < f_count; ++f) lens.push_back(12 * (1 + rng.uniform_index(6)));
    WindowSample w = make_sample(s_count, lens, 100 + rep);
    TokenGrid grid = tokenize(w, 12);
    Rng prng(200 + rep);
    EmbedParams p = init_embed_params(prng, s_count, 12, d);
    Tensor h = embed(grid, p, feature_code_table(f_count, d));
    Tensor gated = station_gate(h, p);
    std::size_t n_all = 0;
    for (std::size_t len : lens) n_all += len / 12;
    CHECK(h.shape() == std::vector<std::size_t>{s_count, n_all, d});
    CHECK(gated.shape() == std::vector<std::size_t>{s_count, n_all, d});
  }
}
