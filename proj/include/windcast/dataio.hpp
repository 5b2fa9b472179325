#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "windcast/geometry.hpp"
#include "windcast/tensor.hpp"

namespace windcast {

enum class FeatureRole { kPollutant, kMeteorologyForecast, kCalendar, kExogenousForecast };
enum class WindComponent { kNone, kSpeed, kDirection };

/// One input feature: its name in series.csv (calendar features are
/// generated, not read), how many hours past the anchor it is known, and an
/// optional tag marking it as a wind column feeding the per-patch summaries.
struct FeatureSpec {
  std::string name;
  std::size_t availability = 0;  // m_i hours, 0 <= m_i <= H
  bool is_target = false;
  FeatureRole role = FeatureRole::kExogenousForecast;
  WindComponent wind_component = WindComponent::kNone;
};

FeatureRole feature_role_from_string(const std::string& s);
std::string feature_role_to_string(FeatureRole role);

/// Dense hourly (time x station x feature) array. Cells that were absent
/// from the CSV and not close enough to a previous value to forward-fill
/// keep their `missing` flag; windows touching them are skipped.
struct SeriesFrame {
  std::int64_t t0_epoch_hour = 0;
  std::vector<std::string> stations;
  std::vector<std::string> columns;
  Tensor values;                      // T x S x F
  std::vector<std::uint8_t> missing;  // T*S*F

  std::size_t hours() const { return values.rank() ? values.dim(0) : 0; }
  std::size_t station_count() const { return stations.size(); }
  std::size_t feature_count() const { return columns.size(); }
  std::size_t column_index(const std::string& name) const;
  bool is_missing(std::size_t t, std::size_t s, std::size_t f) const {
    return missing[(t * station_count() + s) * feature_count() + f] != 0;
  }
  void set_missing(std::size_t t, std::size_t s, std::size_t f, bool m) {
    missing[(t * station_count() + s) * feature_count() + f] = m ? 1 : 0;
  }
};

/// Per-feature z-score statistics fitted on the chronological training
/// portion only.
class Normalizer {
 public:
  Normalizer() = default;

  /// Pools every non-missing cell of hours [begin, end). A zero-variance
  /// feature raises ConstantFeature unless `allow_constant`, in which case
  /// its std is clamped to 1 so the feature normalizes to a constant 0.
  static Normalizer fit(const SeriesFrame& frame, std::size_t begin, std::size_t end,
                        bool allow_constant = false);

  double apply(double v, std::size_t feature) const {
    return (v - mean_[feature]) / std_[feature];
  }
  double invert(double v, std::size_t feature) const {
    return v * std_[feature] + mean_[feature];
  }
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& stds() const { return std_; }
  void set(std::vector<double> means, std::vector<double> stds);

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

/// One training/inference window anchored at hour index t (time "now").
struct WindowSample {
  std::int64_t anchor_epoch_hour = 0;
  std::size_t anchor_index = 0;   // hour index within the source frame
  std::vector<Tensor> x;          // per feature: S x (L + m_i), normalized
  Tensor y;                       // S x H normalized; empty when target future unavailable
  WindSummary wind;               // per forecast patch
  bool has_target() const { return y.numel() > 0; }
};

struct WindowConfig {
  std::size_t lookback = 48;   // L
  std::size_t horizon = 24;    // H
  std::size_t patch_len = 12;  // P
  std::size_t stride = 1;
  bool per_station_wind = false;
  bool require_target = true;
  double calm_threshold_ms = 0.1;
};

struct SplitRanges {
  std::pair<std::size_t, std::size_t> train;
  std::pair<std::size_t, std::size_t> val;
  std::pair<std::size_t, std::size_t> test;
};

// --- time helpers (UTC, whole hours) ---------------------------------------
std::int64_t parse_iso_hour(const std::string& text);
std::string format_iso_hour(std::int64_t epoch_hour);

// --- loading ----------------------------------------------------------------

/// stations.csv with header station_id,name,lat,lon; row order defines the
/// station index.
StationNetwork load_network(const std::string& path);

/// series.csv with header timestamp,station_id,<columns>. Gaps of at most 3
/// hours are forward-filled; longer runs stay missing.
SeriesFrame load_series(const std::string& path, const StationNetwork& network,
                        const std::vector<std::string>& columns);

void write_stations_csv(const std::string& path, const StationNetwork& network);
void write_series_csv(const std::string& path, const SeriesFrame& frame);

/// Appends hour-of-day / day-of-week sine-cosine columns (availability H,
/// generated from the timestamp axis) and returns the matching specs.
std::vector<FeatureSpec> add_calendar_features(SeriesFrame& frame, std::size_t horizon);

/// Errors unless specs are internally consistent with (H, P): exactly one
/// target with availability 0, availabilities multiples of P and <= H, and a
/// speed/direction wind pair when transport is enabled.
void validate_specs(const std::vector<FeatureSpec>& specs, std::size_t horizon,
                    std::size_t patch_len, bool transport_enabled);

std::size_t target_feature_index(const std::vector<FeatureSpec>& specs);

/// Contiguous chronological ranges; train is rounded down, the remainder
/// goes to test. Every range must hold at least L + H hours.
SplitRanges chronological_split(std::size_t hours, double train_frac, double val_frac,
                                double test_frac, std::size_t min_hours);

/// Per-patch network-mean wind: meteorological (speed, direction-from)
/// converted to blowing-toward components, averaged over the patch hours and
/// stations. Patches with a mean speed below the calm threshold come out as
/// (0, 0) with speed 0.
WindSummary patch_wind(const SeriesFrame& raw, const std::vector<FeatureSpec>& specs,
                       std::size_t anchor, const WindowConfig& cfg);

/// Windows with anchors inside [begin, end) such that the whole span
/// [t - L + 1, t + H] stays inside the range; windows touching missing cells
/// are skipped.
std::vector<WindowSample> make_windows(const SeriesFrame& raw, const Normalizer& norm,
                                       const std::vector<FeatureSpec>& specs,
                                       const WindowConfig& cfg, std::size_t begin,
                                       std::size_t end);

/// Meteorological convention: direction is where the wind comes FROM,
/// degrees clockwise from north. Returns the (east, north) components of the
/// vector the wind blows TOWARD.
std::pair<double, double> wind_vector_from_met(double speed, double direction_deg);

}  // namespace windcast
