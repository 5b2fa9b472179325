#include "windcast/geometry.hpp"

#include <cmath>
#include <sstream>

namespace windcast {

std::vector<std::pair<double, double>> project_coords(
    const std::vector<std::pair<double, double>>& latlon) {
  if (latlon.size() < 2) {
    throw NetworkTooSmall("need at least 2 stations for a network");
  }
  double lat_c = 0.0, lon_c = 0.0;
  for (const auto& [lat, lon] : latlon) {
    if (!(std::abs(lat) < 90.0)) {
      throw InvalidCoordinate("latitude must lie strictly inside (-90, 90)");
    }
    lat_c += lat;
    lon_c += lon;
  }
  lat_c /= static_cast<double>(latlon.size());
  lon_c /= static_cast<double>(latlon.size());

  const double deg = M_PI / 180.0;
  const double cos_lat = std::cos(lat_c * deg);
  std::vector<std::pair<double, double>> planar;
  planar.reserve(latlon.size());
  for (const auto& [lat, lon] : latlon) {
    double x = kEarthRadiusKm * (lon - lon_c) * deg * cos_lat;
    double y = kEarthRadiusKm * (lat - lat_c) * deg;
    planar.emplace_back(x, y);
  }
  for (std::size_t a = 0; a < latlon.size(); ++a) {
    for (std::size_t b = a + 1; b < latlon.size(); ++b) {
      if (latlon[a] == latlon[b]) {
        std::ostringstream msg;
        msg << "stations " << a << " and " << b << " share coordinates";
        throw DegenerateGeometry(msg.str());
      }
    }
  }
  return planar;
}

Tensor pairwise_distance(const std::vector<std::pair<double, double>>& planar) {
  const std::size_t s_count = planar.size();
  Tensor d({s_count, s_count});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s == s0) continue;
      double dx = planar[s].first - planar[s0].first;
      double dy = planar[s].second - planar[s0].second;
      if (!std::isfinite(dx) || !std::isfinite(dy)) {
        throw InvalidCoordinate("non-finite planar coordinate");
      }
      double dist = std::hypot(dx, dy);
      if (dist == 0.0) {
        std::ostringstream msg;
        msg << "stations " << s << " and " << s0 << " coincide";
        throw DegenerateGeometry(msg.str());
      }
      d.at(s, s0) = dist;
    }
  }
  return d;
}

Tensor unit_bearings(const std::vector<std::pair<double, double>>& planar,
                     const Tensor& distances) {
  const std::size_t s_count = planar.size();
  Tensor r({s_count, s_count, 2});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s == s0) continue;
      double dist = distances.at(s, s0);
      r.at(s, s0, 0) = (planar[s].first - planar[s0].first) / dist;
      r.at(s, s0, 1) = (planar[s].second - planar[s0].second) / dist;
    }
  }
  return r;
}

StationNetwork build_network(std::vector<std::string> station_ids,
                             std::vector<std::pair<double, double>> latlon) {
  if (station_ids.size() != latlon.size()) {
    throw SchemaError("station id / coordinate count mismatch");
  }
  StationNetwork net;
  net.station_ids = std::move(station_ids);
  net.latlon = std::move(latlon);
  net.planar = project_coords(net.latlon);
  net.distances = pairwise_distance(net.planar);
  net.bearings = unit_bearings(net.planar, net.distances);
  return net;
}

Tensor wind_alignment(double u_east, double u_north, const Tensor& bearings) {
  const std::size_t s_count = bearings.dim(0);
  Tensor a({s_count, s_count});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s == s0) continue;
      a.at(s, s0) = u_east * bearings.at(s, s0, 0) + u_north * bearings.at(s, s0, 1);
    }
  }
  return a;
}

Tensor wind_alignment(const WindSummary& wind, std::size_t patch, const Tensor& bearings) {
  const std::size_t s_count = bearings.dim(0);
  if (!wind.per_station()) {
    return wind_alignment(wind.u_hat.at(patch, 0, 0), wind.u_hat.at(patch, 0, 1), bearings);
  }
  Tensor a({s_count, s_count});
  for (std::size_t s = 0; s < s_count; ++s) {
    double ue = wind.u_hat.at(patch, s, 0);
    double un = wind.u_hat.at(patch, s, 1);
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      if (s == s0) continue;
      a.at(s, s0) = ue * bearings.at(s, s0, 0) + un * bearings.at(s, s0, 1);
    }
  }
  return a;
}

}  // namespace windcast
