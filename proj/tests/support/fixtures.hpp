#pragma once

// Shared fixtures for unit and acceptance tests: a small synthetic world with
// varied wind and a clean learnable signal.

#include <cmath>
#include <string>
#include <vector>

#include "windcast/model.hpp"
#include "windcast/simulator.hpp"

namespace windcast::testkit {

inline std::vector<FeatureSpec> base_specs(std::size_t horizon) {
  FeatureSpec target{"pm10", 0, true, FeatureRole::kPollutant, WindComponent::kNone};
  FeatureSpec speed{"wind_speed", horizon, false, FeatureRole::kMeteorologyForecast,
                    WindComponent::kSpeed};
  FeatureSpec dir{"wind_dir", horizon, false, FeatureRole::kMeteorologyForecast,
                  WindComponent::kDirection};
  return {target, speed, dir};
}

struct TinyWorld {
  StationNetwork network;
  SeriesFrame frame;
  std::vector<FeatureSpec> specs;
  Normalizer norm;
  ModelLayout layout;
  std::vector<WindowSample> windows;
};

/// Three stations, varied wind, smooth multi-frequency pollutant signal.
/// Every returned window carries a target block.
inline TinyWorld tiny_world(ModelConfig cfg, std::size_t hours, std::uint64_t seed,
                            std::size_t stride = 1) {
  TinyWorld w;
  w.network = build_network({"s0", "s1", "s2"},
                            {{59.30, 18.00}, {59.32, 18.05}, {59.35, 18.01}});
  w.frame.t0_epoch_hour = parse_iso_hour("2022-03-01T00:00:00Z");
  w.frame.stations = w.network.station_ids;
  w.frame.columns = {"pm10", "wind_speed", "wind_dir"};
  w.frame.values = Tensor({hours, 3, 3});
  w.frame.missing.assign(hours * 3 * 3, 0);
  Rng rng(seed);
  double phase = rng.uniform(0.0, 6.28);
  for (std::size_t t = 0; t < hours; ++t) {
    double tt = static_cast<double>(t);
    for (std::size_t s = 0; s < 3; ++s) {
      double ss = static_cast<double>(s);
      w.frame.values.at(t, s, 0) = 10.0 + 3.0 * std::sin(0.26 * tt + ss) +
                                   1.5 * std::sin(0.053 * tt + phase) + 0.8 * ss;
      w.frame.values.at(t, s, 1) = 4.0 + 2.0 * std::sin(0.031 * tt + 0.3 * ss);
      w.frame.values.at(t, s, 2) = std::fmod(140.0 + 17.0 * std::sin(0.011 * tt) + 4.0 * tt, 360.0);
    }
  }
  w.specs = base_specs(cfg.horizon);
  if (cfg.add_calendar) {
    auto cal = add_calendar_features(w.frame, cfg.horizon);
    w.specs.insert(w.specs.end(), cal.begin(), cal.end());
  }
  w.layout = make_layout(cfg, w.specs, 3);
  w.norm = Normalizer::fit(w.frame, 0, hours, false);
  WindowConfig wc;
  wc.lookback = w.layout.lookback;
  wc.horizon = w.layout.horizon;
  wc.patch_len = w.layout.patch_len;
  wc.stride = stride;
  wc.per_station_wind = cfg.per_station_wind;
  w.windows = make_windows(w.frame, w.norm, w.specs, wc, 0, hours);
  return w;
}

/// The gradcheck configuration: S=3, target plus the wind pair, L=48, H=24,
/// P=12, d=8, two heads.
inline ModelConfig gradcheck_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.n_heads = 2;
  cfg.patch_len = 12;
  cfg.horizon = 24;
  cfg.lookback = 48;
  cfg.add_calendar = false;
  return cfg;
}

}  // namespace windcast::testkit
