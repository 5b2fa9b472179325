#include "windcast/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace windcast {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (quoted) {
      if (ch == '"') {
        quoted = false;
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  return out;
}

double parse_double(const std::string& text, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(text, &pos);
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("non-numeric value '" + text + "' in " + context);
  }
}

// days since 1970-01-01 (Howard Hinnant's civil-days algorithm)
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

}  // namespace

std::int64_t parse_iso_hour(const std::string& text) {
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  char sep = 0;
  int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &year, &month, &day, &sep, &hour,
                      &minute, &second);
  if (n < 7 || (sep != 'T' && sep != ' ')) {
    throw SchemaError("unparseable ISO-8601 timestamp '" + text + "'");
  }
  if (minute != 0 || second != 0) {
    throw SchemaError("timestamp '" + text + "' is not on an exact hour");
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour < 0 || hour > 23) {
    throw SchemaError("timestamp '" + text + "' out of range");
  }
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 24 +
         hour;
}

std::string format_iso_hour(std::int64_t epoch_hour) {
  std::int64_t days = epoch_hour / 24;
  std::int64_t hour = epoch_hour % 24;
  if (hour < 0) {
    hour += 24;
    days -= 1;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:00:00Z", static_cast<long long>(y), m,
                d, static_cast<long long>(hour));
  return buf;
}

std::size_t SeriesFrame::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw SchemaError("unknown series column '" + name + "'");
}

FeatureRole feature_role_from_string(const std::string& s) {
  if (s == "pollutant") return FeatureRole::kPollutant;
  if (s == "meteorology_forecast") return FeatureRole::kMeteorologyForecast;
  if (s == "calendar") return FeatureRole::kCalendar;
  if (s == "exogenous_forecast") return FeatureRole::kExogenousForecast;
  throw ConfigError("unknown feature role '" + s + "'");
}

std::string feature_role_to_string(FeatureRole role) {
  switch (role) {
    case FeatureRole::kPollutant: return "pollutant";
    case FeatureRole::kMeteorologyForecast: return "meteorology_forecast";
    case FeatureRole::kCalendar: return "calendar";
    case FeatureRole::kExogenousForecast: return "exogenous_forecast";
  }
  return "unknown";
}

StationNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stations file " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty stations file " + path);
  auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw SchemaError("stations file missing column '" + name + "'");
  };
  std::size_t id_col = col("station_id"), lat_col = col("lat"), lon_col = col("lon");
  col("name");

  std::vector<std::string> ids;
  std::vector<std::pair<double, double>> latlon;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw SchemaError("stations row with " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(header.size()));
    }
    const std::string& id = fields[id_col];
    if (!seen.insert(id).second) throw SchemaError("duplicate station_id '" + id + "'");
    ids.push_back(id);
    latlon.emplace_back(parse_double(fields[lat_col], "stations lat"),
                        parse_double(fields[lon_col], "stations lon"));
  }
  if (ids.size() < 2) throw NetworkTooSmall("transport needs at least 2 stations");
  return build_network(std::move(ids), std::move(latlon));
}

SeriesFrame load_series(const std::string& path, const StationNetwork& network,
                        const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open series file " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty series file " + path);
  auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "timestamp" || header[1] != "station_id") {
    throw SchemaError("series header must start with timestamp,station_id");
  }
  std::vector<std::size_t> col_pos(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    bool found = false;
    for (std::size_t j = 2; j < header.size(); ++j) {
      if (header[j] == columns[i]) {
        col_pos[i] = j;
        found = true;
        break;
      }
    }
    if (!found) throw SchemaError("series file missing feature column '" + columns[i] + "'");
  }
  std::map<std::string, std::size_t> station_index;
  for (std::size_t s = 0; s < network.size(); ++s) station_index[network.station_ids[s]] = s;

  struct Row {
    std::int64_t hour;
    std::size_t station;
    std::vector<double> vals;
    std::vector<std::uint8_t> present;
  };
  std::vector<Row> rows;
  std::vector<std::int64_t> last_hour(network.size(),
                                      std::numeric_limits<std::int64_t>::min());
  std::int64_t min_hour = std::numeric_limits<std::int64_t>::max();
  std::int64_t max_hour = std::numeric_limits<std::int64_t>::min();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw SchemaError("series row with " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(header.size()));
    }
    auto it = station_index.find(fields[1]);
    if (it == station_index.end()) {
      throw SchemaError("series references unknown station '" + fields[1] + "'");
    }
    Row row;
    row.hour = parse_iso_hour(fields[0]);
    row.station = it->second;
    if (row.hour <= last_hour[row.station]) {
      throw SchemaError("non-monotone timestamps for station '" + fields[1] + "' at " + fields[0]);
    }
    last_hour[row.station] = row.hour;
    row.vals.resize(columns.size(), 0.0);
    row.present.resize(columns.size(), 0);
    for (std::size_t i = 0; i < columns.size(); ++i) {
      const std::string& cell = fields[col_pos[i]];
      if (cell.empty()) continue;
      row.vals[i] = parse_double(cell, "series column " + columns[i]);
      row.present[i] = 1;
    }
    min_hour = std::min(min_hour, row.hour);
    max_hour = std::max(max_hour, row.hour);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw SchemaError("series file has no data rows");

  SeriesFrame frame;
  frame.t0_epoch_hour = min_hour;
  frame.stations = network.station_ids;
  frame.columns = columns;
  const std::size_t hours = static_cast<std::size_t>(max_hour - min_hour + 1);
  const std::size_t s_count = network.size();
  const std::size_t f_count = columns.size();
  frame.values = Tensor({hours, s_count, f_count});
  frame.missing.assign(hours * s_count * f_count, 1);
  for (const Row& row : rows) {
    std::size_t t = static_cast<std::size_t>(row.hour - min_hour);
    for (std::size_t f = 0; f < f_count; ++f) {
      if (!row.present[f]) continue;
      frame.values.at(t, row.station, f) = row.vals[f];
      frame.set_missing(t, row.station, f, false);
    }
  }

  // forward-fill runs of at most 3 missing hours per station-feature
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t f = 0; f < f_count; ++f) {
      std::size_t t = 0;
      while (t < hours) {
        if (!frame.is_missing(t, s, f)) {
          ++t;
          continue;
        }
        std::size_t run_end = t;
        while (run_end < hours && frame.is_missing(run_end, s, f)) ++run_end;
        const std::size_t run = run_end - t;
        if (t > 0 && run <= 3) {
          double fill = frame.values.at(t - 1, s, f);
          for (std::size_t u = t; u < run_end; ++u) {
            frame.values.at(u, s, f) = fill;
            frame.set_missing(u, s, f, false);
          }
        }
        t = run_end;
      }
    }
  }
  return frame;
}

void write_stations_csv(const std::string& path, const StationNetwork& network) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "station_id,name,lat,lon\n";
  out.precision(10);
  for (std::size_t s = 0; s < network.size(); ++s) {
    out << network.station_ids[s] << "," << network.station_ids[s] << ","
        << network.latlon[s].first << "," << network.latlon[s].second << "\n";
  }
}

void write_series_csv(const std::string& path, const SeriesFrame& frame) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "timestamp,station_id";
  for (const std::string& c : frame.columns) out << "," << c;
  out << "\n";
  out.precision(12);
  for (std::size_t t = 0; t < frame.hours(); ++t) {
    for (std::size_t s = 0; s < frame.station_count(); ++s) {
      out << format_iso_hour(frame.t0_epoch_hour + static_cast<std::int64_t>(t)) << ","
          << frame.stations[s];
      for (std::size_t f = 0; f < frame.feature_count(); ++f) {
        out << ",";
        if (!frame.is_missing(t, s, f)) out << frame.values.at(t, s, f);
      }
      out << "\n";
    }
  }
}

std::vector<FeatureSpec> add_calendar_features(SeriesFrame& frame, std::size_t horizon) {
  const std::size_t hours = frame.hours();
  const std::size_t s_count = frame.station_count();
  const std::size_t f_old = frame.feature_count();
  const std::vector<std::string> names = {"hod_sin", "hod_cos", "dow_sin", "dow_cos"};

  Tensor values({hours, s_count, f_old + names.size()});
  std::vector<std::uint8_t> missing(values.numel(), 0);
  for (std::size_t t = 0; t < hours; ++t) {
    std::int64_t epoch = frame.t0_epoch_hour + static_cast<std::int64_t>(t);
    std::int64_t hod = ((epoch % 24) + 24) % 24;
    std::int64_t day = (epoch - hod) / 24;
    std::int64_t dow = ((day % 7) + 7) % 7;
    double hod_phase = 2.0 * M_PI * static_cast<double>(hod) / 24.0;
    double dow_phase = 2.0 * M_PI * static_cast<double>(dow) / 7.0;
    double cal[4] = {std::sin(hod_phase), std::cos(hod_phase), std::sin(dow_phase),
                     std::cos(dow_phase)};
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t f = 0; f < f_old; ++f) {
        values.at(t, s, f) = frame.values.at(t, s, f);
        missing[(t * s_count + s) * (f_old + 4) + f] = frame.is_missing(t, s, f) ? 1 : 0;
      }
      for (std::size_t j = 0; j < 4; ++j) values.at(t, s, f_old + j) = cal[j];
    }
  }
  frame.values = std::move(values);
  frame.missing = std::move(missing);
  std::vector<FeatureSpec> specs;
  for (const std::string& n : names) {
    frame.columns.push_back(n);
    FeatureSpec spec;
    spec.name = n;
    spec.availability = horizon;
    spec.role = FeatureRole::kCalendar;
    specs.push_back(std::move(spec));
  }
  return specs;
}

void validate_specs(const std::vector<FeatureSpec>& specs, std::size_t horizon,
                    std::size_t patch_len, bool transport_enabled) {
  if (patch_len == 0) throw ConfigError("patch length must be positive");
  std::size_t targets = 0, speed_tags = 0, dir_tags = 0;
  std::set<std::string> names;
  for (const FeatureSpec& f : specs) {
    if (!names.insert(f.name).second) throw ConfigError("duplicate feature name '" + f.name + "'");
    if (f.availability > horizon) {
      throw ConfigError("feature '" + f.name + "' availability exceeds the horizon");
    }
    if (f.availability % patch_len != 0) {
      throw ConfigError("feature '" + f.name + "' availability is not a multiple of the patch length");
    }
    if (f.is_target) {
      ++targets;
      if (f.availability != 0) throw ConfigError("target availability must be 0");
    }
    if (f.wind_component == WindComponent::kSpeed) ++speed_tags;
    if (f.wind_component == WindComponent::kDirection) ++dir_tags;
  }
  if (targets != 1) throw ConfigError("exactly one feature must be the target");
  if (transport_enabled && (speed_tags != 1 || dir_tags != 1)) {
    throw ConfigError("transport requires exactly one wind speed and one wind direction feature");
  }
  if (speed_tags > 1 || dir_tags > 1) throw ConfigError("duplicate wind component tags");
}

std::size_t target_feature_index(const std::vector<FeatureSpec>& specs) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].is_target) return i;
  }
  throw ConfigError("no target feature configured");
}

Normalizer Normalizer::fit(const SeriesFrame& frame, std::size_t begin, std::size_t end,
                           bool allow_constant) {
  if (end > frame.hours() || begin >= end) throw ConfigError("bad normalizer fit range");
  const std::size_t s_count = frame.station_count();
  const std::size_t f_count = frame.feature_count();
  std::vector<double> mean(f_count, 0.0), stddev(f_count, 0.0);
  for (std::size_t f = 0; f < f_count; ++f) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t s = 0; s < s_count; ++s) {
        if (frame.is_missing(t, s, f)) continue;
        acc += frame.values.at(t, s, f);
        ++n;
      }
    }
    if (n == 0) throw ConstantFeature("feature '" + frame.columns[f] + "' has no training data");
    mean[f] = acc / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t s = 0; s < s_count; ++s) {
        if (frame.is_missing(t, s, f)) continue;
        double d = frame.values.at(t, s, f) - mean[f];
        var += d * d;
      }
    }
    var /= static_cast<double>(n);
    if (var <= 0.0) {
      if (!allow_constant) {
        throw ConstantFeature("feature '" + frame.columns[f] + "' is constant over the training split");
      }
      stddev[f] = 1.0;
    } else {
      stddev[f] = std::sqrt(var);
    }
  }
  Normalizer norm;
  norm.set(std::move(mean), std::move(stddev));
  return norm;
}

void Normalizer::set(std::vector<double> means, std::vector<double> stds) {
  for (double s : stds) {
    if (!(s > 0.0)) throw ConstantFeature("normalizer std must be positive");
  }
  mean_ = std::move(means);
  std_ = std::move(stds);
}

SplitRanges chronological_split(std::size_t hours, double train_frac, double val_frac,
                                double test_frac, std::size_t min_hours) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (train_frac <= 0.0 || val_frac <= 0.0 || test_frac <= 0.0) {
    throw ConfigError("all three split fractions must be positive");
  }
  // tiny nudge so exact products like 0.7 * 1000 do not floor to 699
  std::size_t n_train = static_cast<std::size_t>(train_frac * static_cast<double>(hours) + 1e-9);
  std::size_t n_val = static_cast<std::size_t>(val_frac * static_cast<double>(hours) + 1e-9);
  if (n_train + n_val > hours) throw ConfigError("split fractions overflow the data");
  SplitRanges r;
  r.train = {0, n_train};
  r.val = {n_train, n_train + n_val};
  r.test = {n_train + n_val, hours};
  auto require_len = [min_hours](const char* name, std::pair<std::size_t, std::size_t> range) {
    if (range.second - range.first < min_hours) {
      throw SplitTooShort(std::string(name) + " split has fewer than L + H hours");
    }
  };
  require_len("train", r.train);
  require_len("val", r.val);
  require_len("test", r.test);
  return r;
}

std::pair<double, double> wind_vector_from_met(double speed, double direction_deg) {
  double rad = direction_deg * M_PI / 180.0;
  return {-speed * std::sin(rad), -speed * std::cos(rad)};
}

WindSummary patch_wind(const SeriesFrame& raw, const std::vector<FeatureSpec>& specs,
                       std::size_t anchor, const WindowConfig& cfg) {
  std::size_t speed_col = 0, dir_col = 0;
  bool have_speed = false, have_dir = false;
  for (const FeatureSpec& f : specs) {
    if (f.wind_component == WindComponent::kSpeed) {
      speed_col = raw.column_index(f.name);
      have_speed = true;
      if (f.availability < cfg.horizon) {
        throw ConfigError("wind speed feature must be available over the full horizon");
      }
    } else if (f.wind_component == WindComponent::kDirection) {
      dir_col = raw.column_index(f.name);
      have_dir = true;
      if (f.availability < cfg.horizon) {
        throw ConfigError("wind direction feature must be available over the full horizon");
      }
    }
  }
  if (!have_speed || !have_dir) {
    throw ConfigError("transport requires wind speed and direction features");
  }

  const std::size_t s_count = raw.station_count();
  const std::size_t m_pred = cfg.horizon / cfg.patch_len;
  const std::size_t rows = cfg.per_station_wind ? s_count : 1;
  WindSummary wind;
  wind.u_hat = Tensor({m_pred, rows, 2});
  wind.speed = Tensor({m_pred, rows});
  for (std::size_t m = 0; m < m_pred; ++m) {
    std::size_t first = anchor + m * cfg.patch_len + 1;
    for (std::size_t r = 0; r < rows; ++r) {
      double east = 0.0, north = 0.0;
      std::size_t n = 0;
      for (std::size_t h = 0; h < cfg.patch_len; ++h) {
        std::size_t t = first + h;
        for (std::size_t s = 0; s < s_count; ++s) {
          if (cfg.per_station_wind && s != r) continue;
          auto [e, no] = wind_vector_from_met(raw.values.at(t, s, speed_col),
                                              raw.values.at(t, s, dir_col));
          east += e;
          north += no;
          ++n;
        }
      }
      east /= static_cast<double>(n);
      north /= static_cast<double>(n);
      double v = std::hypot(east, north);
      if (v < cfg.calm_threshold_ms) {
        wind.speed.at(m, r) = 0.0;
      } else {
        wind.speed.at(m, r) = v;
        wind.u_hat.at(m, r, 0) = east / v;
        wind.u_hat.at(m, r, 1) = north / v;
      }
    }
  }
  return wind;
}

std::vector<WindowSample> make_windows(const SeriesFrame& raw, const Normalizer& norm,
                                       const std::vector<FeatureSpec>& specs,
                                       const WindowConfig& cfg, std::size_t begin,
                                       std::size_t end) {
  const std::size_t L = cfg.lookback, H = cfg.horizon, P = cfg.patch_len;
  if (P == 0 || L % P != 0 || H % P != 0) {
    throw ConfigError("patch length must divide both the look-back and the horizon");
  }
  if (cfg.stride == 0) throw ConfigError("stride must be positive");
  const std::size_t s_count = raw.station_count();
  const std::size_t target = target_feature_index(specs);
  std::vector<std::size_t> cols(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) cols[i] = raw.column_index(specs[i].name);
  bool has_speed_tag = false, has_dir_tag = false;
  for (const FeatureSpec& f : specs) {
    if (f.wind_component == WindComponent::kSpeed) has_speed_tag = true;
    if (f.wind_component == WindComponent::kDirection) has_dir_tag = true;
  }
  const bool has_wind_tags = has_speed_tag && has_dir_tag;

  if (end > raw.hours()) throw ConfigError("window range exceeds the frame");
  std::vector<WindowSample> out;
  if (begin + L + H > end) return out;
  for (std::size_t t = begin + L - 1; t + H < end; t += cfg.stride) {
    bool clean = true;
    for (std::size_t i = 0; i < specs.size() && clean; ++i) {
      std::size_t lo = t + 1 - L;
      std::size_t hi = t + specs[i].availability;  // inclusive
      for (std::size_t u = lo; u <= hi && clean; ++u) {
        for (std::size_t s = 0; s < s_count; ++s) {
          if (raw.is_missing(u, s, cols[i])) {
            clean = false;
            break;
          }
        }
      }
    }
    bool target_future_clean = true;
    for (std::size_t u = t + 1; u <= t + H && target_future_clean; ++u) {
      for (std::size_t s = 0; s < s_count; ++s) {
        if (raw.is_missing(u, s, cols[target])) {
          target_future_clean = false;
          break;
        }
      }
    }
    if (!clean) continue;
    if (cfg.require_target && !target_future_clean) continue;

    WindowSample w;
    w.anchor_index = t;
    w.anchor_epoch_hour = raw.t0_epoch_hour + static_cast<std::int64_t>(t);
    w.x.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      std::size_t len = L + specs[i].availability;
      Tensor block({s_count, len});
      for (std::size_t s = 0; s < s_count; ++s) {
        for (std::size_t u = 0; u < len; ++u) {
          block.at(s, u) = norm.apply(raw.values.at(t + 1 - L + u, s, cols[i]), cols[i]);
        }
      }
      w.x.push_back(std::move(block));
    }
    if (target_future_clean) {
      w.y = Tensor({s_count, H});
      for (std::size_t s = 0; s < s_count; ++s) {
        for (std::size_t h = 0; h < H; ++h) {
          w.y.at(s, h) = norm.apply(raw.values.at(t + 1 + h, s, cols[target]), cols[target]);
        }
      }
    }
    if (has_wind_tags) w.wind = patch_wind(raw, specs, t, cfg);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace windcast
