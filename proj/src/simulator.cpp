#include "windcast/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace windcast {

namespace {

const std::int64_t kSimEpochStart = parse_iso_hour("2020-07-01T00:00:00Z");
constexpr std::int64_t kScheduleSpan = 20000;  // hours every preset schedule covers

StationNetwork grid_network(std::size_t rows, std::size_t cols, double spacing_km,
                            double lat0, double lon0) {
  const double km_per_deg_lat = kEarthRadiusKm * M_PI / 180.0;
  const double km_per_deg_lon = km_per_deg_lat * std::cos(lat0 * M_PI / 180.0);
  std::vector<std::string> ids;
  std::vector<std::pair<double, double>> latlon;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::ostringstream id;
      id << "st" << (r * cols + c);
      ids.push_back(id.str());
      latlon.emplace_back(lat0 + spacing_km * static_cast<double>(r) / km_per_deg_lat,
                          lon0 + spacing_km * static_cast<double>(c) / km_per_deg_lon);
    }
  }
  return build_network(std::move(ids), std::move(latlon));
}

void validate_scenario(const SyntheticScenario& sc) {
  if (sc.network.size() < 2) throw NetworkTooSmall("scenario needs at least 2 stations");
  if (!(sc.decay >= 0.0 && sc.decay < 1.0)) throw ConfigError("decay must lie in [0, 1)");
  if (sc.kappa < 0.0) throw ConfigError("kappa must be nonnegative");
  if (sc.noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
  if (sc.transport_speed_scale <= 0.0) throw ConfigError("transport_speed_scale must be positive");
  if (sc.advection_strength < 0.0) throw ConfigError("advection_strength must be nonnegative");
  if (sc.wind_program.empty() || sc.wind_program.front().t_start > 0) {
    throw ConfigError("wind program must cover the simulated span from hour 0");
  }
  if (sc.emissions.size() != sc.network.size()) {
    throw ConfigError("emission schedule must cover every station");
  }
  for (const auto& blocks : sc.emissions) {
    if (blocks.empty() || blocks.front().t_start > 0) {
      throw ConfigError("every emission schedule must start at hour 0");
    }
    for (const EmissionBlock& b : blocks) {
      if (b.rate < 0.0) throw ConfigError("emission rates must be nonnegative");
    }
  }
}

}  // namespace

std::pair<double, double> wind_at(const SyntheticScenario& sc, std::int64_t t) {
  const WindSegment* seg = &sc.wind_program.front();
  for (const WindSegment& s : sc.wind_program) {
    if (s.t_start <= t) seg = &s;
    else break;
  }
  return {seg->dir_deg, seg->speed_ms};
}

double emission_at(const SyntheticScenario& sc, std::size_t s, std::int64_t t) {
  const auto& blocks = sc.emissions[s];
  double rate = blocks.front().rate;
  for (const EmissionBlock& b : blocks) {
    if (b.t_start <= t) rate = b.rate;
    else break;
  }
  double amp = sc.emission_diurnal_amp.empty() ? 0.0 : sc.emission_diurnal_amp[s];
  if (amp != 0.0) {
    rate += amp * std::sin(2.0 * M_PI * static_cast<double>(t % 24) / 24.0);
  }
  return std::max(0.0, rate);
}

Tensor advection_weights(const SyntheticScenario& sc, double dir_deg, double speed) {
  const std::size_t s_count = sc.network.size();
  Tensor w({s_count, s_count});
  if (speed <= 0.0) return w;
  auto [ue, un] = wind_vector_from_met(1.0, dir_deg);
  const double reach = sc.transport_speed_scale * speed;
  for (std::size_t s = 0; s < s_count; ++s) {
    double row_sum = 0.0;
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s == s0) continue;
      double align = ue * sc.network.bearings.at(s, s0, 0) + un * sc.network.bearings.at(s, s0, 1);
      if (align <= 0.0) continue;
      double v = sc.advection_strength * align *
                 std::exp(-sc.network.distances.at(s, s0) / reach);
      w.at(s, s0) = v;
      row_sum += v;
    }
    if (row_sum > 1.0) {
      for (std::size_t s0 = 0; s0 < s_count; ++s0) w.at(s, s0) /= row_sum;
    }
  }
  return w;
}

SimResult simulate(const SyntheticScenario& sc, std::size_t hours) {
  validate_scenario(sc);
  if (hours == 0) throw ConfigError("simulation span must be positive");
  const std::size_t s_count = sc.network.size();
  Rng rng(sc.seed);

  SimResult out;
  out.noiseless = Tensor({hours, s_count});
  out.transfer.reserve(hours);
  out.wind.reserve(hours);

  std::vector<double> c(s_count, sc.init_concentration);
  SeriesFrame frame;
  frame.t0_epoch_hour = kSimEpochStart;
  frame.stations = sc.network.station_ids;
  frame.columns = {"pm10", "wind_speed", "wind_dir"};
  frame.values = Tensor({hours, s_count, 3});
  frame.missing.assign(hours * s_count * 3, 0);

  for (std::size_t t = 0; t < hours; ++t) {
    auto [dir, speed] = wind_at(sc, static_cast<std::int64_t>(t));
    Tensor w = advection_weights(sc, dir, speed);

    // stability: total outflow coefficient per source must stay within 1
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      double outflow = 0.0;
      for (std::size_t s = 0; s < s_count; ++s) outflow += w.at(s, s0);
      if (outflow + sc.kappa + sc.decay > 1.0 + 1e-9) {
        throw StabilityError("total outflow coefficient exceeds 1 at step " + std::to_string(t) +
                             " for station " + sc.network.station_ids[s0]);
      }
    }

    for (std::size_t s = 0; s < s_count; ++s) {
      out.noiseless.at(t, s) = c[s];
      double obs = c[s];
      if (sc.noise_std > 0.0) obs += rng.normal(0.0, sc.noise_std);
      frame.values.at(t, s, 0) = obs;
      frame.values.at(t, s, 1) = speed;
      frame.values.at(t, s, 2) = dir;
    }
    out.wind.emplace_back(dir, speed);
    out.transfer.push_back(w);

    std::vector<double> next(s_count, 0.0);
    double mean_c = 0.0;
    for (double v : c) mean_c += v;
    mean_c /= static_cast<double>(s_count);
    for (std::size_t s = 0; s < s_count; ++s) {
      double adv_in = 0.0, adv_out = 0.0;
      for (std::size_t s0 = 0; s0 < s_count; ++s0) {
        adv_in += w.at(s, s0) * c[s0];
        adv_out += w.at(s0, s) * c[s];
      }
      // mean over the other S-1 stations
      double diff = sc.kappa * ((mean_c * static_cast<double>(s_count) - c[s]) /
                                    static_cast<double>(s_count - 1) -
                                c[s]);
      next[s] = c[s] + adv_in - adv_out + diff - sc.decay * c[s] +
                emission_at(sc, s, static_cast<std::int64_t>(t));
      next[s] = std::max(0.0, next[s]);
    }
    c = std::move(next);
  }
  out.frame = std::move(frame);
  return out;
}

Tensor oracle_upwind(const SyntheticScenario& sc, std::size_t t) {
  if (t >= static_cast<std::size_t>(kScheduleSpan)) {
    throw IndexError("oracle query beyond the scheduled span");
  }
  auto [dir, speed] = wind_at(sc, static_cast<std::int64_t>(t));
  return advection_weights(sc, dir, speed);
}

SyntheticScenario preset(const std::string& name, std::uint64_t seed) {
  SyntheticScenario sc;
  sc.name = name;
  sc.seed = seed;
  Rng rng(seed * 0x51f0d1e5u + 11);
  if (name == "line3") {
    // three collinear stations on an east-west line, steady eastward wind
    const double lat0 = 59.30, lon0 = 17.90;
    const double km_per_deg_lat = kEarthRadiusKm * M_PI / 180.0;
    const double km_per_deg_lon = km_per_deg_lat * std::cos(lat0 * M_PI / 180.0);
    std::vector<std::string> ids = {"west", "mid", "east"};
    std::vector<std::pair<double, double>> latlon;
    for (int i = 0; i < 3; ++i) {
      latlon.emplace_back(lat0, lon0 + 6.0 * i / km_per_deg_lon);
    }
    sc.network = build_network(std::move(ids), std::move(latlon));
    sc.wind_program = {{0, 270.0, 4.0}};  // from the west, blowing east
    sc.emissions = {{{0, 1.6}}, {{0, 0.12}}, {{0, 0.12}}};
    sc.emission_diurnal_amp = {1.0, 0.0, 0.0};
    sc.kappa = 0.01;
    sc.decay = 0.08;
    sc.noise_std = 0.0;
    sc.transport_speed_scale = 1.2;
    sc.advection_strength = 0.35;
    sc.init_concentration = 1.0;
  } else if (name == "grid9" || name == "rotating_wind9") {
    sc.network = grid_network(3, 3, 4.0, 59.30, 18.00);
    if (name == "grid9") {
      // alternating easterly / south-westerly regimes; 135 degrees apart so
      // the upwind neighborhoods of every station are disjoint on this grid
      std::int64_t t = 0;
      bool easterly = true;
      while (t < kScheduleSpan) {
        double dir = easterly ? 90.0 : 225.0;
        double speed = rng.uniform(4.0, 6.0);
        sc.wind_program.push_back({t, dir, speed});
        t += 36 + static_cast<std::int64_t>(rng.uniform_index(49));  // 36..84 h
        easterly = !easterly;
      }
    } else {
      for (std::int64_t t = 0; t < kScheduleSpan; t += 12) {
        double dir = std::fmod(static_cast<double>(t) / 12.0 * 15.0, 360.0);
        sc.wind_program.push_back({t, dir, 5.0});
      }
    }
    sc.emissions.assign(9, {{0, 0.05}});
    sc.emission_diurnal_amp.assign(9, 0.15);
    // stations 0 (SW corner) and 2 (SE corner) carry strong block sources
    for (std::size_t corner : {std::size_t{0}, std::size_t{2}}) {
      std::vector<EmissionBlock> blocks;
      std::int64_t t = 0;
      while (t < kScheduleSpan) {
        blocks.push_back({t, rng.uniform(0.3, 4.0)});
        t += 24 + static_cast<std::int64_t>(rng.uniform_index(49));  // 24..72 h
      }
      sc.emissions[corner] = std::move(blocks);
      sc.emission_diurnal_amp[corner] = 0.0;
    }
    sc.kappa = 0.01;
    sc.decay = 0.10;
    sc.noise_std = 0.08;
    // long advection reach: corner mass hits the far side directly instead of
    // relaying hop-by-hop, which keeps the mid-edge standing stock low
    sc.transport_speed_scale = 2.5;
    sc.advection_strength = 0.2;
    sc.init_concentration = 0.5;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return sc;
}

void write_truth_json(const std::string& path, const SimResult& result,
                      const StationNetwork& network) {
  nlohmann::json j;
  j["version"] = 1;
  j["stations"] = network.station_ids;
  j["hours"] = result.noiseless.dim(0);
  nlohmann::json wind = nlohmann::json::array();
  for (const auto& [dir, speed] : result.wind) {
    wind.push_back({{"dir_deg", dir}, {"speed_ms", speed}});
  }
  j["wind"] = std::move(wind);
  const std::size_t hours = result.noiseless.dim(0);
  const std::size_t s_count = result.noiseless.dim(1);
  nlohmann::json noiseless = nlohmann::json::array();
  nlohmann::json transfer = nlohmann::json::array();
  for (std::size_t t = 0; t < hours; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t s = 0; s < s_count; ++s) row.push_back(result.noiseless.at(t, s));
    noiseless.push_back(std::move(row));
    nlohmann::json mat = nlohmann::json::array();
    for (std::size_t s = 0; s < s_count; ++s) {
      nlohmann::json r = nlohmann::json::array();
      for (std::size_t s0 = 0; s0 < s_count; ++s0) r.push_back(result.transfer[t].at(s, s0));
      mat.push_back(std::move(r));
    }
    transfer.push_back(std::move(mat));
  }
  j["noiseless"] = std::move(noiseless);
  j["transfer"] = std::move(transfer);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump();
}

}  // namespace windcast
