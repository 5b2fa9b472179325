#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "windcast/attribution.hpp"

using namespace windcast;
using testkit::TinyWorld;
using testkit::tiny_world;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

// minimal XML well-formedness check: declaration, balanced tags, quoting
bool xml_well_formed(const std::string& body) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] != '<') {
      ++i;
      continue;
    }
    std::size_t end = body.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = body.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag.front() == '?' || tag.front() == '!') continue;
    bool closing = tag.front() == '/';
    bool self_closing = tag.back() == '/';
    std::string name = tag.substr(closing ? 1 : 0);
    if (self_closing) name.pop_back();
    name = name.substr(0, name.find_first_of(" \t\n"));
    if (name.empty()) return false;
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

struct Scene {
  TinyWorld world;
  ForecastBundle bundle;
  std::vector<AttributionRecord> records;
  WindowSample sample;
};

Scene make_scene(ModelConfig cfg, std::uint64_t seed, bool uniform_attention = false) {
  Scene sc{tiny_world(cfg, 200, seed), {}, {}, {}};
  ModelParams params = init_params(sc.world.layout, sc.world.network, seed + 1);
  if (uniform_attention) params.attn.w_q.fill(0.0);
  sc.sample = sc.world.windows[3];
  sc.bundle = forward(sc.world.layout, params, sc.world.network, sc.sample);
  sc.records = build_attribution(sc.world.layout, sc.bundle, sc.sample, sc.world.network);
  return sc;
}

}  // namespace

TEST_CASE("records copy attention and spatial weights without renormalization") {
  Scene sc = make_scene(testkit::gradcheck_config(), 21);
  REQUIRE(sc.records.size() == 3);
  const std::size_t m_pred = sc.world.layout.m_pred;
  const std::size_t n_all = sc.world.layout.n_all;

  for (std::size_t s = 0; s < 3; ++s) {
    const AttributionRecord& rec = sc.records[s];
    for (std::size_t m = 0; m < m_pred; ++m) {
      double row = 0.0;
      for (std::size_t t = 0; t < n_all; ++t) {
        CHECK(rec.temporal.at(m, t) == sc.bundle.attn_mean.at(s, m, t));  // exact copy
        row += rec.temporal.at(m, t);
      }
      CHECK(std::abs(row - 1.0) < 1e-6);

      double mass = 0.0;
      for (const SpatialShare& share : rec.spatial[m]) {
        CHECK(share.share >= 0.0);
        std::size_t s0 = 0;
        while (sc.world.network.station_ids[s0] != share.source) ++s0;
        CHECK(share.share == sc.bundle.plans[m].weights.at(s, s0));  // exact copy
        mass += share.share;
      }
      if (!rec.spatial[m].empty()) CHECK(std::abs(mass - 1.0) < 1e-6);
      CHECK(rec.transport_fraction[m] >= 0.0);
      CHECK(rec.transport_fraction[m] <= 1.0);
    }
  }
}

TEST_CASE("uniform attention aggregates to token-count shares per feature") {
  Scene sc = make_scene(testkit::gradcheck_config(), 22, true);
  const AttributionRecord& rec = sc.records[0];
  const std::size_t n_all = sc.world.layout.n_all;
  for (std::size_t m = 0; m < sc.world.layout.m_pred; ++m) {
    std::vector<double> agg = aggregate_by_feature(rec, m);
    REQUIRE(agg.size() == sc.world.layout.specs.size());
    for (std::size_t f = 0; f < agg.size(); ++f) {
      double expected = static_cast<double>(sc.world.layout.tokens_per_feature[f]) /
                        static_cast<double>(n_all);
      CHECK(agg[f] == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("single-feature model aggregates to exactly one") {
  ModelConfig cfg = testkit::gradcheck_config();
  cfg.transport_enabled = false;  // no wind features needed
  TinyWorld w = tiny_world(cfg, 200, 23);
  w.specs = {w.specs[0]};  // keep only the target
  w.layout = make_layout(cfg, w.specs, 3);
  WindowConfig wc;
  wc.lookback = w.layout.lookback;
  wc.horizon = w.layout.horizon;
  wc.patch_len = w.layout.patch_len;
  auto windows = make_windows(w.frame, w.norm, w.specs, wc, 0, w.frame.hours());
  ModelParams params = init_params(w.layout, w.network, 24);
  ForecastBundle bundle = forward(w.layout, params, w.network, windows[0]);
  auto records = build_attribution(w.layout, bundle, windows[0], w.network);
  for (std::size_t m = 0; m < w.layout.m_pred; ++m) {
    auto agg = aggregate_by_feature(records[0], m);
    REQUIRE(agg.size() == 1);
    CHECK(agg[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("regrouped aggregates re-sum to the original row total") {
  Scene sc = make_scene(testkit::gradcheck_config(), 25);
  for (const AttributionRecord& rec : sc.records) {
    for (std::size_t m = 0; m < sc.world.layout.m_pred; ++m) {
      double row = 0.0;
      for (std::size_t t = 0; t < sc.world.layout.n_all; ++t) row += rec.temporal.at(m, t);
      double agg_total = 0.0;
      for (double a : aggregate_by_feature(rec, m)) agg_total += a;
      CHECK(std::abs(agg_total - row) < 1e-9);
    }
  }
}

TEST_CASE("a single unmasked source carries a 100 percent share") {
  Rng rng(26);
  ModelConfig cfg = testkit::gradcheck_config();
  TinyWorld w = tiny_world(cfg, 200, 26);
  ModelParams params = init_params(w.layout, w.network, 27);
  WindowSample sample = w.windows[0];
  // steady wind straight from station 0 toward station 1 leaves station 1
  // exactly one admissible source under a large margin; fabricate that wind
  sample.wind.u_hat = Tensor({2, 1, 2});
  sample.wind.speed = Tensor({2, 1});
  auto dir = std::pair<double, double>{
      w.network.bearings.at(1, 0, 0), w.network.bearings.at(1, 0, 1)};
  for (std::size_t m = 0; m < 2; ++m) {
    sample.wind.u_hat.at(m, 0, 0) = dir.first;
    sample.wind.u_hat.at(m, 0, 1) = dir.second;
    sample.wind.speed.at(m, 0) = 6.0;
  }
  params.physics.eps_margin_raw = Tensor::scalar(kernels::softplus_inverse(0.95));
  ForecastBundle bundle = forward(w.layout, params, w.network, sample);
  auto records = build_attribution(w.layout, bundle, sample, w.network);
  for (std::size_t m = 0; m < 2; ++m) {
    REQUIRE(records[1].spatial[m].size() == 1);
    CHECK(records[1].spatial[m][0].source == "s0");
    CHECK(records[1].spatial[m][0].share == 1.0);
  }
}

TEST_CASE("a 72-hour forecast exports six 12-hour patches") {
  ModelConfig cfg = testkit::gradcheck_config();
  cfg.horizon = 72;
  cfg.lookback = 96;
  Scene sc = make_scene(cfg, 28);
  for (const AttributionRecord& rec : sc.records) {
    CHECK(rec.spatial.size() == 6);
    CHECK(rec.wind.size() == 6);
    CHECK(rec.temporal.dim(0) == 6);
  }
}

TEST_CASE("export: empty record list yields valid JSON and no figures") {
  auto dir = (std::filesystem::temp_directory_path() / "windcast_attr_empty").string();
  std::filesystem::remove_all(dir);
  export_report({}, dir, "meta");
  auto records = parse_attribution(dir + "/attribution.json");
  CHECK(records.empty());
  std::size_t svg_count = 0;
  for (auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".svg") ++svg_count;
  }
  CHECK(svg_count == 0);
}

TEST_CASE("export round trip is exact and byte-stable") {
  Scene sc = make_scene(testkit::gradcheck_config(), 29);
  auto dir1 = (std::filesystem::temp_directory_path() / "windcast_attr_a").string();
  auto dir2 = (std::filesystem::temp_directory_path() / "windcast_attr_b").string();
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);

  export_report(sc.records, dir1, "meta string");
  auto parsed = parse_attribution(dir1 + "/attribution.json");
  REQUIRE(parsed.size() == sc.records.size());
  for (std::size_t s = 0; s < parsed.size(); ++s) {
    CHECK(parsed[s].station_id == sc.records[s].station_id);
    CHECK(parsed[s].gate == sc.records[s].gate);
    CHECK(std::memcmp(parsed[s].temporal.data(), sc.records[s].temporal.data(),
                      sizeof(double) * parsed[s].temporal.numel()) == 0);
    REQUIRE(parsed[s].spatial.size() == sc.records[s].spatial.size());
    for (std::size_t m = 0; m < parsed[s].spatial.size(); ++m) {
      REQUIRE(parsed[s].spatial[m].size() == sc.records[s].spatial[m].size());
      for (std::size_t k = 0; k < parsed[s].spatial[m].size(); ++k) {
        CHECK(parsed[s].spatial[m][k].source == sc.records[s].spatial[m][k].source);
        CHECK(parsed[s].spatial[m][k].share == sc.records[s].spatial[m][k].share);
      }
    }
  }

  export_report(parsed, dir2, "meta string");
  CHECK(slurp(dir1 + "/attribution.json") == slurp(dir2 + "/attribution.json"));
}

TEST_CASE("exported SVGs are well-formed XML") {
  Scene sc = make_scene(testkit::gradcheck_config(), 30);
  auto dir = (std::filesystem::temp_directory_path() / "windcast_attr_svg").string();
  std::filesystem::remove_all(dir);
  export_report(sc.records, dir, "meta");
  std::size_t svg_count = 0;
  for (auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".svg") continue;
    ++svg_count;
    CHECK(xml_well_formed(slurp(entry.path().string())));
  }
  CHECK(svg_count == 3 * sc.records.size());
}
