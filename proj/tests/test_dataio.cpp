#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "windcast/dataio.hpp"

using namespace windcast;

namespace {

std::string temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "windcast_dataio_tests";
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string write_file(const std::string& name, const std::string& body) {
  std::string path = temp_dir() + "/" + name;
  std::ofstream out(path);
  out << body;
  return path;
}

std::string stations_csv(std::size_t n) {
  std::ostringstream body;
  body << "station_id,name,lat,lon\n";
  for (std::size_t i = 0; i < n; ++i) {
    body << "s" << i << ",station " << i << "," << 59.30 + 0.01 * static_cast<double>(i) << ","
         << 18.00 + 0.01 * static_cast<double>(i) << "\n";
  }
  return body.str();
}

// dense in-memory frame used by the windowing tests
SeriesFrame make_frame(std::size_t hours, std::size_t stations, std::size_t features,
                       std::uint64_t seed) {
  SeriesFrame f;
  f.t0_epoch_hour = parse_iso_hour("2021-01-01T00:00:00Z");
  for (std::size_t s = 0; s < stations; ++s) f.stations.push_back("s" + std::to_string(s));
  for (std::size_t c = 0; c < features; ++c) f.columns.push_back("f" + std::to_string(c));
  f.values = Tensor({hours, stations, features});
  f.missing.assign(hours * stations * features, 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < f.values.numel(); ++i) f.values[i] = rng.normal(0.0, 1.0);
  return f;
}

std::vector<FeatureSpec> wind_specs(std::size_t horizon) {
  FeatureSpec target{"f0", 0, true, FeatureRole::kPollutant, WindComponent::kNone};
  FeatureSpec speed{"f1", horizon, false, FeatureRole::kMeteorologyForecast,
                    WindComponent::kSpeed};
  FeatureSpec dir{"f2", horizon, false, FeatureRole::kMeteorologyForecast,
                  WindComponent::kDirection};
  return {target, speed, dir};
}

}  // namespace

TEST_CASE("load_network: nine stations, order preserved") {
  StationNetwork net = load_network(write_file("st9.csv", stations_csv(9)));
  CHECK(net.size() == 9);
  CHECK(net.station_ids.front() == "s0");
  CHECK(net.station_ids.back() == "s8");
}

TEST_CASE("load_network error paths") {
  CHECK_THROWS_AS(load_network(write_file("st1.csv", stations_csv(1))), NetworkTooSmall);
  CHECK_THROWS_AS(load_network(write_file("dup.csv",
                                          "station_id,name,lat,lon\n"
                                          "a,x,59.3,18.0\n"
                                          "a,y,59.4,18.1\n")),
                  SchemaError);
  CHECK_THROWS_AS(load_network(write_file("badcol.csv",
                                          "station_id,name,latitude,lon\n"
                                          "a,x,59.3,18.0\n")),
                  SchemaError);
  CHECK_THROWS_AS(load_network(write_file("nonnum.csv",
                                          "station_id,name,lat,lon\n"
                                          "a,x,59.3,18.0\n"
                                          "b,y,north,18.1\n")),
                  SchemaError);
}

TEST_CASE("load_series: dense frame, forward fill, long gaps stay missing") {
  StationNetwork net = load_network(write_file("st2.csv", stations_csv(2)));
  std::ostringstream body;
  body << "timestamp,station_id,pm10\n";
  for (int t = 0; t < 100; ++t) {
    for (int s = 0; s < 2; ++s) {
      // station 0 skips hour 10 (1-hour gap) and hours 40..44 (5-hour gap)
      if (s == 0 && (t == 10 || (t >= 40 && t < 45))) continue;
      body << format_iso_hour(parse_iso_hour("2021-01-01T00:00:00Z") + t) << ",s" << s << ","
           << 10.0 + t + 100 * s << "\n";
    }
  }
  SeriesFrame frame = load_series(write_file("series_gap.csv", body.str()), net, {"pm10"});
  CHECK(frame.hours() == 100);
  CHECK(frame.station_count() == 2);
  CHECK(frame.feature_count() == 1);

  // 1-hour gap forward-filled from the previous hour
  CHECK_FALSE(frame.is_missing(10, 0, 0));
  CHECK(frame.values.at(10, 0, 0) == frame.values.at(9, 0, 0));
  // 5-hour gap exceeds the fill limit of 3 and stays missing
  for (int t = 40; t < 45; ++t) CHECK(frame.is_missing(t, 0, 0));
  CHECK_FALSE(frame.is_missing(45, 0, 0));
  // untouched station is complete
  for (int t = 0; t < 100; ++t) CHECK_FALSE(frame.is_missing(t, 1, 0));
}

TEST_CASE("load_series error paths") {
  StationNetwork net = load_network(write_file("st2b.csv", stations_csv(2)));
  CHECK_THROWS_AS(load_series(write_file("unknown_station.csv",
                                         "timestamp,station_id,pm10\n"
                                         "2021-01-01T00:00:00Z,zz,1.0\n"),
                              net, {"pm10"}),
                  SchemaError);
  CHECK_THROWS_AS(load_series(write_file("nonmono.csv",
                                         "timestamp,station_id,pm10\n"
                                         "2021-01-01T05:00:00Z,s0,1.0\n"
                                         "2021-01-01T03:00:00Z,s0,2.0\n"),
                              net, {"pm10"}),
                  SchemaError);
  CHECK_THROWS_AS(load_series(write_file("offhour.csv",
                                         "timestamp,station_id,pm10\n"
                                         "2021-01-01T00:30:00Z,s0,1.0\n"),
                              net, {"pm10"}),
                  SchemaError);
}

TEST_CASE("normalizer: z-score on the training split only, invertible") {
  SeriesFrame frame = make_frame(200, 2, 2, 3);
  // feature 1: constant plus mild noise around 5
  Rng rng(9);
  for (std::size_t t = 0; t < 200; ++t) {
    for (std::size_t s = 0; s < 2; ++s) {
      frame.values.at(t, s, 1) = 5.0 + 0.1 * rng.normal(0.0, 1.0);
    }
  }
  Normalizer norm = Normalizer::fit(frame, 0, 140, false);

  double acc = 0.0, acc2 = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < 140; ++t) {
    for (std::size_t s = 0; s < 2; ++s) {
      double z = norm.apply(frame.values.at(t, s, 1), 1);
      acc += z;
      acc2 += z * z;
      ++n;
    }
  }
  CHECK(std::abs(acc / static_cast<double>(n)) < 1e-9);
  CHECK(acc2 / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-9));

  // invert(apply(x)) == x within 1e-10
  for (double v : {-3.3, 0.0, 1.7, 42.0}) {
    CHECK(std::abs(norm.invert(norm.apply(v, 0), 0) - v) < 1e-10);
  }

  // statistics depend on the training split only
  SeriesFrame tampered = frame;
  for (std::size_t t = 140; t < 200; ++t) tampered.values.at(t, 0, 0) += 1000.0;
  Normalizer norm2 = Normalizer::fit(tampered, 0, 140, false);
  CHECK(std::memcmp(norm.means().data(), norm2.means().data(), sizeof(double) * 2) == 0);
  CHECK(std::memcmp(norm.stds().data(), norm2.stds().data(), sizeof(double) * 2) == 0);
}

TEST_CASE("normalizer rejects constant features unless explicitly allowed") {
  SeriesFrame frame = make_frame(50, 2, 1, 4);
  for (std::size_t i = 0; i < frame.values.numel(); ++i) frame.values[i] = 2.5;
  CHECK_THROWS_AS(Normalizer::fit(frame, 0, 50, false), ConstantFeature);
  Normalizer norm = Normalizer::fit(frame, 0, 50, true);
  CHECK(norm.stds()[0] == 1.0);
  CHECK(norm.apply(2.5, 0) == 0.0);
}

TEST_CASE("chronological_split: paper fractions and error paths") {
  SplitRanges r = chronological_split(1000, 0.7, 0.2, 0.1, 48);
  CHECK(r.train.second == 700);
  CHECK(r.val.first == 700);
  CHECK(r.val.second == 900);
  CHECK(r.test.first == 900);
  CHECK(r.test.second == 1000);

  CHECK_THROWS_AS(chronological_split(10, 0.7, 0.2, 0.1, 48), SplitTooShort);
  CHECK_THROWS_AS(chronological_split(1000, 1.0, 0.0, 0.0, 48), ConfigError);
  CHECK_THROWS_AS(chronological_split(1000, 0.5, 0.2, 0.1, 48), ConfigError);
}

TEST_CASE("make_windows: count, stride and divisibility") {
  const std::size_t L = 48, H = 24;
  SeriesFrame frame = make_frame(2 * (L + H), 2, 3, 5);
  // wind columns need meteorological ranges
  for (std::size_t t = 0; t < frame.hours(); ++t) {
    for (std::size_t s = 0; s < 2; ++s) {
      frame.values.at(t, s, 1) = 5.0 + std::sin(0.1 * static_cast<double>(t));
      frame.values.at(t, s, 2) = 270.0;
    }
  }
  Normalizer norm = Normalizer::fit(frame, 0, frame.hours(), true);
  WindowConfig cfg;
  cfg.lookback = L;
  cfg.horizon = H;
  cfg.patch_len = 12;
  cfg.stride = 1;

  auto windows = make_windows(frame, norm, wind_specs(H), cfg, 0, frame.hours());
  CHECK(windows.size() == frame.hours() - (L + H) + 1);
  CHECK(windows.front().x.size() == 3);
  CHECK(windows.front().x[0].dim(1) == L);
  CHECK(windows.front().x[1].dim(1) == L + H);
  CHECK(windows.front().y.dim(1) == H);
  CHECK(windows.front().wind.patches() == H / 12);

  cfg.stride = H;
  auto strided = make_windows(frame, norm, wind_specs(H), cfg, 0, frame.hours());
  CHECK(strided.size() >= 1);

  cfg.patch_len = 5;
  CHECK_THROWS_AS(make_windows(frame, norm, wind_specs(H), cfg, 0, frame.hours()), ConfigError);
}

TEST_CASE("make_windows skips windows touching unfilled gaps") {
  const std::size_t L = 24, H = 12;
  SeriesFrame frame = make_frame(120, 2, 3, 6);
  for (std::size_t t = 0; t < frame.hours(); ++t) {
    for (std::size_t s = 0; s < 2; ++s) {
      frame.values.at(t, s, 1) = 4.0;
      frame.values.at(t, s, 2) = 180.0;
    }
  }
  // unfillable gap at hours 60..65 of the target for station 1
  for (std::size_t t = 60; t < 66; ++t) frame.set_missing(t, 1, 0, true);
  Normalizer norm = Normalizer::fit(frame, 0, frame.hours(), true);
  WindowConfig cfg;
  cfg.lookback = L;
  cfg.horizon = H;
  cfg.patch_len = 12;

  auto windows = make_windows(frame, norm, wind_specs(H), cfg, 0, frame.hours());
  // anchors whose [t-L+1, t+H] span touches 60..65 must be absent
  for (const WindowSample& w : windows) {
    std::size_t t = w.anchor_index;
    bool overlaps = (t + H >= 60) && (t + 1 <= 65 + L);
    CHECK_FALSE(overlaps);
  }
  // anchors in [60 - H, 65 + L - 1] are dropped: L + H + gap - 1 of them
  CHECK(windows.size() == 120 - (L + H) + 1 - (L + H + 6 - 1));
}

TEST_CASE("patch_wind: uniform westerly flow, cancellation, met convention") {
  const std::size_t H = 12;
  SeriesFrame frame = make_frame(60, 3, 3, 7);
  for (std::size_t t = 0; t < 60; ++t) {
    for (std::size_t s = 0; s < 3; ++s) {
      frame.values.at(t, s, 1) = 5.0;    // speed
      frame.values.at(t, s, 2) = 270.0;  // from the west -> blowing east
    }
  }
  WindowConfig cfg;
  cfg.lookback = 24;
  cfg.horizon = H;
  cfg.patch_len = 12;

  WindSummary wind = patch_wind(frame, wind_specs(H), 30, cfg);
  CHECK(wind.patches() == 1);
  CHECK(wind.speed.at(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(wind.u_hat.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(wind.u_hat.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));

  // opposite directions with equal speed cancel to a calm patch
  for (std::size_t t = 0; t < 60; ++t) {
    for (std::size_t s = 0; s < 3; ++s) {
      frame.values.at(t, s, 2) = (t % 2 == 0) ? 270.0 : 90.0;
    }
  }
  WindSummary calm = patch_wind(frame, wind_specs(H), 30, cfg);
  CHECK(calm.speed.at(0, 0) == 0.0);
  CHECK(calm.u_hat.at(0, 0, 0) == 0.0);
  CHECK(calm.u_hat.at(0, 0, 1) == 0.0);
}

TEST_CASE("meteorological convention: four cardinal directions") {
  auto [e_from_w, n_from_w] = wind_vector_from_met(1.0, 270.0);
  CHECK(e_from_w == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n_from_w == doctest::Approx(0.0).epsilon(1e-12));
  auto [e_from_n, n_from_n] = wind_vector_from_met(1.0, 0.0);
  CHECK(e_from_n == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(n_from_n == doctest::Approx(-1.0).epsilon(1e-12));
  auto [e_from_e, n_from_e] = wind_vector_from_met(1.0, 90.0);
  CHECK(e_from_e == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(n_from_e == doctest::Approx(0.0).epsilon(1e-12));
  auto [e_from_s, n_from_s] = wind_vector_from_met(1.0, 180.0);
  CHECK(e_from_s == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(n_from_s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("patch_wind is invariant under station order") {
  const std::size_t H = 24;
  SeriesFrame frame = make_frame(80, 3, 3, 8);
  Rng rng(21);
  for (std::size_t t = 0; t < 80; ++t) {
    for (std::size_t s = 0; s < 3; ++s) {
      frame.values.at(t, s, 1) = rng.uniform(1.0, 8.0);
      frame.values.at(t, s, 2) = rng.uniform(0.0, 360.0);
    }
  }
  WindowConfig cfg;
  cfg.lookback = 24;
  cfg.horizon = H;
  cfg.patch_len = 12;
  WindSummary base = patch_wind(frame, wind_specs(H), 40, cfg);

  SeriesFrame permuted = frame;  // swap stations 0 and 2
  for (std::size_t t = 0; t < 80; ++t) {
    for (std::size_t f = 0; f < 3; ++f) {
      std::swap(permuted.values.at(t, 0, f), permuted.values.at(t, 2, f));
    }
  }
  WindSummary swapped = patch_wind(permuted, wind_specs(H), 40, cfg);
  for (std::size_t m = 0; m < base.patches(); ++m) {
    CHECK(swapped.speed.at(m, 0) == doctest::Approx(base.speed.at(m, 0)).epsilon(1e-12));
    CHECK(swapped.u_hat.at(m, 0, 0) == doctest::Approx(base.u_hat.at(m, 0, 0)).epsilon(1e-12));
    CHECK(swapped.u_hat.at(m, 0, 1) == doctest::Approx(base.u_hat.at(m, 0, 1)).epsilon(1e-12));
  }
}

TEST_CASE("no leakage: values past each feature's cutoff never enter a window") {
  const std::size_t L = 24, H = 12;
  SeriesFrame frame = make_frame(100, 2, 3, 11);
  for (std::size_t t = 0; t < 100; ++t) {
    for (std::size_t s = 0; s < 2; ++s) {
      frame.values.at(t, s, 1) = 3.0 + 0.01 * static_cast<double>(t);
      frame.values.at(t, s, 2) = 200.0;
    }
  }
  Normalizer norm = Normalizer::fit(frame, 0, 70, true);
  WindowConfig cfg;
  cfg.lookback = L;
  cfg.horizon = H;
  cfg.patch_len = 12;

  auto specs = wind_specs(H);
  auto base = make_windows(frame, norm, specs, cfg, 0, frame.hours());
  Rng rng(33);
  for (int rep = 0; rep < 30; ++rep) {
    std::size_t wi = rng.uniform_index(base.size());
    const WindowSample& w = base[wi];
    std::size_t t = w.anchor_index;
    std::size_t f = rng.uniform_index(3);
    // first hour past feature f's cutoff (past t+H for the target's y block)
    std::size_t cutoff = (f == 0) ? t + H : t + specs[f].availability;
    if (cutoff + 1 >= frame.hours()) continue;
    std::size_t hit = cutoff + 1 + rng.uniform_index(frame.hours() - cutoff - 1);

    SeriesFrame tampered = frame;
    tampered.values.at(hit, rng.uniform_index(2), f) += 17.3;
    auto rebuilt = make_windows(tampered, norm, specs, cfg, 0, frame.hours());
    const WindowSample& w2 = rebuilt[wi];
    REQUIRE(w2.anchor_index == w.anchor_index);
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(w2.x[i].numel() == w.x[i].numel());
      CHECK(std::memcmp(w2.x[i].data(), w.x[i].data(), sizeof(double) * w.x[i].numel()) == 0);
    }
    CHECK(std::memcmp(w2.y.data(), w.y.data(), sizeof(double) * w.y.numel()) == 0);
    CHECK(std::memcmp(w2.wind.u_hat.data(), w.wind.u_hat.data(),
                      sizeof(double) * w.wind.u_hat.numel()) == 0);
    CHECK(std::memcmp(w2.wind.speed.data(), w.wind.speed.data(),
                      sizeof(double) * w.wind.speed.numel()) == 0);
  }
}

TEST_CASE("validate_specs enforces the contract") {
  auto specs = wind_specs(24);
  CHECK_NOTHROW(validate_specs(specs, 24, 12, true));

  auto no_target = specs;
  no_target[0].is_target = false;
  CHECK_THROWS_AS(validate_specs(no_target, 24, 12, true), ConfigError);

  auto no_wind = specs;
  no_wind[1].wind_component = WindComponent::kNone;
  CHECK_THROWS_AS(validate_specs(no_wind, 24, 12, true), ConfigError);
  CHECK_NOTHROW(validate_specs(no_wind, 24, 12, false));

  auto bad_avail = specs;
  bad_avail[1].availability = 13;  // not a multiple of P
  CHECK_THROWS_AS(validate_specs(bad_avail, 24, 12, true), ConfigError);

  auto over_horizon = specs;
  over_horizon[1].availability = 36;
  CHECK_THROWS_AS(validate_specs(over_horizon, 24, 12, true), ConfigError);
}

TEST_CASE("calendar features are appended with availability H") {
  SeriesFrame frame = make_frame(60, 2, 1, 13);
  auto cal = add_calendar_features(frame, 24);
  CHECK(cal.size() == 4);
  CHECK(frame.feature_count() == 5);
  for (const FeatureSpec& f : cal) {
    CHECK(f.availability == 24);
    CHECK(f.role == FeatureRole::kCalendar);
  }
  // hour-of-day code repeats with period 24
  CHECK(frame.values.at(0, 0, 1) == doctest::Approx(frame.values.at(24, 0, 1)).epsilon(1e-12));
  CHECK(frame.values.at(5, 0, 2) == doctest::Approx(frame.values.at(29, 0, 2)).epsilon(1e-12));
}

TEST_CASE("iso hour round trip") {
  for (const char* ts : {"2020-07-01T00:00:00Z", "1999-12-31T23:00:00Z", "2024-02-29T07:00:00Z"}) {
    CHECK(format_iso_hour(parse_iso_hour(ts)) == ts);
  }
  CHECK_THROWS_AS(parse_iso_hour("not a time"), SchemaError);
}

TEST_CASE("patch_wind per-station toggle keeps one row per station") {
  const std::size_t H = 24;
  SeriesFrame frame = make_frame(80, 3, 3, 55);
  Rng rng(56);
  for (std::size_t t = 0; t < 80; ++t) {
    for (std::size_t s = 0; s < 3; ++s) {
      frame.values.at(t, s, 1) = 2.0 + static_cast<double>(s) + 0.2 * rng.uniform();
      frame.values.at(t, s, 2) = 90.0 * static_cast<double>(s);
    }
  }
  WindowConfig cfg;
  cfg.lookback = 24;
  cfg.horizon = H;
  cfg.patch_len = 12;
  cfg.per_station_wind = true;
  WindSummary wind = patch_wind(frame, wind_specs(H), 30, cfg);
  CHECK(wind.per_station());
  CHECK(wind.rows() == 3);
  // station rows must match a single-station recomputation
  for (std::size_t s = 0; s < 3; ++s) {
    double east = 0.0, north = 0.0;
    for (std::size_t h = 31; h <= 42; ++h) {
      auto [e, n] = wind_vector_from_met(frame.values.at(h, s, 1), frame.values.at(h, s, 2));
      east += e;
      north += n;
    }
    east /= 12.0;
    north /= 12.0;
    double v = std::hypot(east, north);
    CHECK(wind.speed.at(0, s) == doctest::Approx(v).epsilon(1e-12));
  }
}
