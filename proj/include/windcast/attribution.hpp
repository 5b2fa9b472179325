#pragma once

#include <string>
#include <vector>

#include "windcast/model.hpp"

namespace windcast {

struct SpatialShare {
  std::string source;
  double share = 0.0;
};

struct PatchWindEcho {
  double u_east = 0.0;
  double u_north = 0.0;
  double speed = 0.0;
};

/// Both interpretability channels for one station of one forecast:
/// the temporal-feature attention rows (direct copies of A) and the
/// per-patch upwind source shares (direct copies of the W_sp row).
struct AttributionRecord {
  std::string station_id;
  Tensor temporal;  // M_pred x N_all, head-averaged attention
  std::vector<TokenMeta> token_meta;
  std::vector<std::string> feature_names;
  std::vector<std::vector<SpatialShare>> spatial;  // per patch; empty list = fully masked row
  double gate = 0.0;
  std::vector<double> transport_fraction;  // per patch
  std::vector<PatchWindEcho> wind;         // per patch (network wind echo)
};

/// Assembles records for every station from one forward pass.
std::vector<AttributionRecord> build_attribution(const ModelLayout& layout,
                                                 const ForecastBundle& bundle,
                                                 const WindowSample& sample,
                                                 const StationNetwork& network);

/// Sums one forecast patch's attention over each feature's tokens.
std::vector<double> aggregate_by_feature(const AttributionRecord& record, std::size_t patch);

/// attribution.json plus one SVG per station and channel
/// (<station>_spatial.svg, <station>_temporal.svg, <station>_windrose.svg).
/// Figure writing is skipped when `records` is empty.
void export_report(const std::vector<AttributionRecord>& records, const std::string& out_dir,
                   const std::string& model_meta);

std::vector<AttributionRecord> parse_attribution(const std::string& path);

// figure generators, exposed for tests
std::string spatial_svg(const AttributionRecord& record);
std::string temporal_svg(const AttributionRecord& record);
std::string windrose_svg(const AttributionRecord& record);

}  // namespace windcast
