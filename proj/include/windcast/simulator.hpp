#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "windcast/dataio.hpp"
#include "windcast/geometry.hpp"
#include "windcast/tensor.hpp"

namespace windcast {

/// Piecewise-constant wind: `dir_deg` is the meteorological direction the
/// wind comes FROM; the last segment extends to the end of any simulation.
struct WindSegment {
  std::int64_t t_start = 0;
  double dir_deg = 0.0;
  double speed_ms = 0.0;
};

/// Step change in a station's emission rate at `t_start`.
struct EmissionBlock {
  std::int64_t t_start = 0;
  double rate = 0.0;
};

/// Full description of a simulated network. The hourly update moves mass
/// between stations along the wind (advection), mixes it isotropically
/// (diffusion), removes a first-order fraction (decay/deposition) and injects
/// per-station emissions -- a station-graph discretization of the
/// advection-diffusion-reaction balance.
struct SyntheticScenario {
  std::string name;
  StationNetwork network;
  std::vector<WindSegment> wind_program;
  std::vector<std::vector<EmissionBlock>> emissions;  // per station
  std::vector<double> emission_diurnal_amp;           // per station, clipped at 0
  double kappa = 0.0;                  // inter-station diffusion coefficient
  double decay = 0.0;                  // first-order loss per hour, in [0, 1)
  double noise_std = 0.0;              // observation noise on the emitted pollutant series
  double transport_speed_scale = 1.0;  // advection reach in km per m/s of wind
  double advection_strength = 0.3;     // proportionality constant of the transfer weights
  double init_concentration = 0.0;
  std::uint64_t seed = 0;
};

struct SimResult {
  SeriesFrame frame;                            // columns pm10, wind_speed, wind_dir
  Tensor noiseless;                             // T x S concentrations
  std::vector<Tensor> transfer;                 // per hour: S x S advection weights
  std::vector<std::pair<double, double>> wind;  // per hour (dir_deg, speed)
};

/// Wind at hour t per the program (last segment extends forever).
std::pair<double, double> wind_at(const SyntheticScenario& sc, std::int64_t t);

/// Emission rate of station s at hour t.
double emission_at(const SyntheticScenario& sc, std::size_t s, std::int64_t t);

/// The advection transfer-weight matrix for a given wind: row s holds the
/// inflow coefficients into station s. Weight is proportional to
/// [u_hat . bearing]_+ * exp(-D / (scale * speed)); rows are scaled down when
/// their sum would exceed 1. Calm wind yields the zero matrix.
Tensor advection_weights(const SyntheticScenario& sc, double dir_deg, double speed);

/// Runs the hourly update for `hours` steps and emits the observed series
/// (pollutant plus wind columns, availability-H meteorology) together with
/// the noiseless truth and per-step transfer weights.
SimResult simulate(const SyntheticScenario& sc, std::size_t hours);

/// Exact transfer weights used at step t; pure function of the scenario.
Tensor oracle_upwind(const SyntheticScenario& sc, std::size_t t);

/// Named deterministic scenarios: line3 (3 collinear stations, steady
/// eastward wind), grid9 (3x3 grid with two alternating wind regimes feeding
/// opposite corner sources) and rotating_wind9 (full 360-degree sweep).
SyntheticScenario preset(const std::string& name, std::uint64_t seed = 7);

/// truth.json with per-hour transfer matrices, noiseless values and wind.
void write_truth_json(const std::string& path, const SimResult& result,
                      const StationNetwork& network);

}  // namespace windcast
