#pragma once

#include <string>
#include <utility>
#include <vector>

#include "windcast/tensor.hpp"

namespace windcast {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Station geography and the derived quantities the transport kernel needs:
/// planar coordinates, the pairwise distance matrix D and unit bearing
/// vectors pointing from each source station toward each target station.
struct StationNetwork {
  std::vector<std::string> station_ids;
  std::vector<std::pair<double, double>> latlon;  // (lat, lon) degrees
  std::vector<std::pair<double, double>> planar;  // (x east, y north) km, centroid at origin
  Tensor distances;                               // S x S km
  Tensor bearings;                                // S x S x 2; bearings[s][s0] points s0 -> s

  std::size_t size() const { return station_ids.size(); }
};

/// Per-forecast-patch wind summary. `u_hat` holds unit "blowing toward"
/// vectors (east, north); `speed` the magnitudes in m/s. K == 1 for
/// network-mean wind, K == S for the per-station toggle. Calm patches carry
/// u_hat == (0, 0) and speed == 0.
struct WindSummary {
  Tensor u_hat;  // M x K x 2
  Tensor speed;  // M x K

  std::size_t patches() const { return speed.rank() ? speed.dim(0) : 0; }
  std::size_t rows() const { return speed.rank() > 1 ? speed.dim(1) : 1; }
  bool per_station() const { return rows() > 1; }
};

/// Equirectangular projection about the centroid of the given stations.
/// x = R * dlon * cos(lat_centroid), y = R * dlat, both in km.
std::vector<std::pair<double, double>> project_coords(
    const std::vector<std::pair<double, double>>& latlon);

/// Euclidean distances over planar coordinates; throws DegenerateGeometry
/// when two stations coincide.
Tensor pairwise_distance(const std::vector<std::pair<double, double>>& planar);

/// Unit bearing vectors (planar_s - planar_s0) / D[s][s0]; diagonal (0, 0).
Tensor unit_bearings(const std::vector<std::pair<double, double>>& planar,
                     const Tensor& distances);

/// Assembles a StationNetwork from ids and coordinates.
StationNetwork build_network(std::vector<std::string> station_ids,
                             std::vector<std::pair<double, double>> latlon);

/// Wind alignment scores u_hat . bearing for every (target, source) pair.
/// `u_hat` is a single unit vector (east, north); calm wind (0, 0) yields an
/// all-zero matrix. Diagonal entries are 0.
Tensor wind_alignment(double u_east, double u_north, const Tensor& bearings);

/// Alignment for patch m of a WindSummary: K == 1 applies the single vector
/// to every target row, K == S applies station s's wind to target row s.
Tensor wind_alignment(const WindSummary& wind, std::size_t patch, const Tensor& bearings);

}  // namespace windcast
