#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "windcast/simulator.hpp"

using namespace windcast;

namespace {

StationNetwork line_network(std::size_t n, double spacing_km) {
  const double lat0 = 59.3;
  const double km_per_deg_lat = kEarthRadiusKm * M_PI / 180.0;
  const double km_per_deg_lon = km_per_deg_lat * std::cos(lat0 * M_PI / 180.0);
  std::vector<std::string> ids;
  std::vector<std::pair<double, double>> latlon;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("p" + std::to_string(i));
    latlon.emplace_back(lat0, 18.0 + spacing_km * static_cast<double>(i) / km_per_deg_lon);
  }
  return build_network(std::move(ids), std::move(latlon));
}

SyntheticScenario base_scenario(std::size_t n, double spacing_km) {
  SyntheticScenario sc;
  sc.network = line_network(n, spacing_km);
  sc.wind_program = {{0, 270.0, 5.0}};
  sc.emissions.assign(n, {{0, 0.0}});
  sc.emission_diurnal_amp.assign(n, 0.0);
  sc.kappa = 0.0;
  sc.decay = 0.0;
  sc.noise_std = 0.0;
  sc.transport_speed_scale = 1.0;
  sc.advection_strength = 0.0;
  sc.init_concentration = 0.0;
  sc.seed = 1;
  return sc;
}

}  // namespace

TEST_CASE("decoupled integrator: constant emission accumulates linearly") {
  SyntheticScenario sc = base_scenario(3, 10.0);
  sc.wind_program = {{0, 270.0, 0.0}};  // calm: no advection at all
  sc.emissions[0] = {{0, 2.0}};
  sc.init_concentration = 1.5;
  SimResult r = simulate(sc, 20);
  for (std::size_t t = 0; t < 20; ++t) {
    CHECK(r.noiseless.at(t, 0) ==
          doctest::Approx(1.5 + 2.0 * static_cast<double>(t)).epsilon(1e-12));
    CHECK(r.noiseless.at(t, 1) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(r.noiseless.at(t, 2) == doctest::Approx(1.5).epsilon(1e-12));
  }
}

TEST_CASE("geometric decay without sources or transport") {
  SyntheticScenario sc = base_scenario(2, 10.0);
  sc.wind_program = {{0, 270.0, 0.0}};
  sc.decay = 0.12;
  sc.init_concentration = 8.0;
  SimResult r = simulate(sc, 15);
  for (std::size_t t = 0; t < 15; ++t) {
    double expected = 8.0 * std::pow(1.0 - 0.12, static_cast<double>(t));
    CHECK(r.noiseless.at(t, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("eastward pulse: 5-step hand trace matches the simulator") {
  SyntheticScenario sc = base_scenario(2, 10.0);
  sc.transport_speed_scale = 10.0;  // reach 50 km >> 10 km spacing
  sc.advection_strength = 0.2;
  sc.emissions[0] = {{0, 5.0}, {1, 0.0}};  // single pulse at the west station

  SimResult r = simulate(sc, 6);

  // independent trace of the explicit update
  const double w = 0.2 * 1.0 * std::exp(-10.0 / 50.0);  // east <- west transfer weight
  double cw = 0.0, ce = 0.0;
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(r.noiseless.at(t, 0) == doctest::Approx(cw).epsilon(1e-12));
    CHECK(r.noiseless.at(t, 1) == doctest::Approx(ce).epsilon(1e-12));
    double moved = w * cw;
    double emitted = t == 0 ? 5.0 : 0.0;
    cw = cw - moved + emitted;
    ce = ce + moved;

    // logged transfer weights match the closed form
    CHECK(r.transfer[t].at(1, 0) == doctest::Approx(w).epsilon(1e-12));
    CHECK(r.transfer[t].at(0, 1) == 0.0);  // nothing ever flows west
  }
  // the pulse reached the east station and never flowed back
  CHECK(r.noiseless.at(5, 1) > 0.0);
}

TEST_CASE("oracle_upwind: calm hour, logged equality, one-sided support") {
  SyntheticScenario sc = base_scenario(3, 8.0);
  sc.advection_strength = 0.25;
  sc.wind_program = {{0, 270.0, 4.0}, {10, 0.0, 0.0}, {20, 45.0, 6.0}};
  sc.emissions[0] = {{0, 1.0}};
  SimResult r = simulate(sc, 30);

  // calm segment: zero matrix
  Tensor calm = oracle_upwind(sc, 15);
  for (std::size_t i = 0; i < calm.numel(); ++i) CHECK(calm[i] == 0.0);

  for (std::size_t t : {std::size_t{3}, std::size_t{12}, std::size_t{25}}) {
    Tensor w = oracle_upwind(sc, t);
    CHECK(std::memcmp(w.data(), r.transfer[t].data(), sizeof(double) * w.numel()) == 0);
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t s0 = 0; s0 < 3; ++s0) {
        if (w.at(s, s0) > 0.0) CHECK(w.at(s0, s) == 0.0);  // single wind direction
      }
    }
  }
  CHECK_THROWS_AS(oracle_upwind(sc, 100000), IndexError);
}

TEST_CASE("mass is conserved up to emissions when decay and noise are off") {
  SyntheticScenario sc = preset("grid9", 11);
  sc.decay = 0.0;
  sc.noise_std = 0.0;
  const std::size_t hours = 400;
  SimResult r = simulate(sc, hours);

  double mass0 = 0.0;
  for (std::size_t s = 0; s < 9; ++s) mass0 += r.noiseless.at(0, s);
  double emitted = 0.0;
  for (std::size_t t = 0; t + 1 < hours; ++t) {
    for (std::size_t s = 0; s < 9; ++s) {
      emitted += emission_at(sc, s, static_cast<std::int64_t>(t));
    }
  }
  double mass_end = 0.0;
  for (std::size_t s = 0; s < 9; ++s) mass_end += r.noiseless.at(hours - 1, s);
  CHECK(std::abs(mass_end - (mass0 + emitted)) < 1e-8);
}

TEST_CASE("noiseless concentrations stay nonnegative") {
  SimResult r = simulate(preset("grid9", 3), 600);
  for (std::size_t i = 0; i < r.noiseless.numel(); ++i) CHECK(r.noiseless[i] >= 0.0);
}

TEST_CASE("determinism: same scenario and seed give bit-identical datasets") {
  SyntheticScenario sc = preset("grid9", 7);
  SimResult a = simulate(sc, 200);
  SimResult b = simulate(sc, 200);
  CHECK(std::memcmp(a.frame.values.data(), b.frame.values.data(),
                    sizeof(double) * a.frame.values.numel()) == 0);
  CHECK(std::memcmp(a.noiseless.data(), b.noiseless.data(),
                    sizeof(double) * a.noiseless.numel()) == 0);
}

TEST_CASE("presets") {
  CHECK(preset("grid9").network.size() == 9);
  CHECK(preset("rotating_wind9").network.size() == 9);
  CHECK(preset("line3").network.size() == 3);
  CHECK_THROWS_AS(preset("nope"), ConfigError);

  // line3 wind program is constant, so the oracle is identical at all hours
  SyntheticScenario line = preset("line3");
  CHECK(line.wind_program.size() == 1);
  Tensor w0 = oracle_upwind(line, 0);
  for (std::size_t t : {std::size_t{7}, std::size_t{123}, std::size_t{4000}}) {
    Tensor wt = oracle_upwind(line, t);
    CHECK(std::memcmp(w0.data(), wt.data(), sizeof(double) * w0.numel()) == 0);
  }
}

TEST_CASE("unstable configurations raise StabilityError naming the step") {
  SyntheticScenario sc = base_scenario(3, 10.0);
  sc.transport_speed_scale = 10.0;
  sc.advection_strength = 0.9;  // west station's total outflow exceeds 1
  sc.emissions[0] = {{0, 1.0}};
  CHECK_THROWS_AS(simulate(sc, 10), StabilityError);
}

TEST_CASE("emitted wind columns carry the program") {
  SyntheticScenario sc = preset("line3");
  SimResult r = simulate(sc, 50);
  CHECK(r.frame.columns[1] == "wind_speed");
  CHECK(r.frame.columns[2] == "wind_dir");
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(r.frame.values.at(17, s, 1) == 4.0);
    CHECK(r.frame.values.at(17, s, 2) == 270.0);
  }
}
