#include "windcast/attribution.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "windcast/json_util.hpp"

namespace windcast {

namespace {

double patch_norm(const Tensor& ctx, std::size_t s, std::size_t m) {
  double acc = 0.0;
  for (std::size_t c = 0; c < ctx.dim(2); ++c) acc += ctx.at(s, m, c) * ctx.at(s, m, c);
  return std::sqrt(acc);
}

std::string color_for(std::size_t idx) {
  static const char* palette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
                                  "#eeca3b", "#b279a2", "#ff9da6", "#9d755d"};
  return palette[idx % 9];
}

}  // namespace

std::vector<AttributionRecord> build_attribution(const ModelLayout& layout,
                                                 const ForecastBundle& bundle,
                                                 const WindowSample& sample,
                                                 const StationNetwork& network) {
  const std::size_t s_count = layout.s_count;
  const std::size_t m_pred = layout.m_pred;
  const std::size_t n_all = layout.n_all;

  TokenGrid grid = tokenize(sample, layout.patch_len);
  std::vector<std::string> feature_names;
  for (const FeatureSpec& f : layout.specs) feature_names.push_back(f.name);

  std::vector<AttributionRecord> records;
  records.reserve(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    AttributionRecord rec;
    rec.station_id = network.station_ids[s];
    rec.token_meta = grid.meta;
    rec.feature_names = feature_names;
    rec.temporal = Tensor({m_pred, n_all});
    for (std::size_t m = 0; m < m_pred; ++m) {
      for (std::size_t t = 0; t < n_all; ++t) {
        rec.temporal.at(m, t) = bundle.attn_mean.at(s, m, t);
      }
    }
    if (layout.per_channel_gate) {
      double acc = 0.0;
      for (std::size_t c = 0; c < layout.d; ++c) acc += bundle.gamma.at(s, c);
      rec.gate = acc / static_cast<double>(layout.d);
    } else if (bundle.gamma.numel() == s_count) {
      rec.gate = bundle.gamma[s];
    }
    for (std::size_t m = 0; m < m_pred; ++m) {
      std::vector<SpatialShare> shares;
      if (!bundle.plans.empty()) {
        const Tensor& w = bundle.plans[m].weights;
        for (std::size_t s0 = 0; s0 < s_count; ++s0) {
          if (w.at(s, s0) != 0.0) {
            shares.push_back({network.station_ids[s0], w.at(s, s0)});
          }
        }
      }
      rec.spatial.push_back(std::move(shares));

      double frac = 0.0;
      if (bundle.transported_ctx.numel() > 0) {
        double local = patch_norm(bundle.local_ctx, s, m);
        double gated = std::abs(rec.gate) * patch_norm(bundle.transported_ctx, s, m);
        if (local + gated > 0.0) frac = gated / (local + gated);
      }
      rec.transport_fraction.push_back(frac);

      PatchWindEcho echo;
      if (sample.wind.patches() == m_pred) {
        std::size_t row = sample.wind.per_station() ? s : 0;
        echo.u_east = sample.wind.u_hat.at(m, row, 0);
        echo.u_north = sample.wind.u_hat.at(m, row, 1);
        echo.speed = sample.wind.speed.at(m, row);
      }
      rec.wind.push_back(echo);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<double> aggregate_by_feature(const AttributionRecord& record, std::size_t patch) {
  std::vector<double> out(record.feature_names.size(), 0.0);
  for (std::size_t t = 0; t < record.token_meta.size(); ++t) {
    out[record.token_meta[t].feature] += record.temporal.at(patch, t);
  }
  return out;
}

static nlohmann::json record_to_json(const AttributionRecord& rec) {
  nlohmann::json j;
  j["station_id"] = rec.station_id;
  j["feature_names"] = rec.feature_names;
  nlohmann::json meta = nlohmann::json::array();
  for (const TokenMeta& m : rec.token_meta) {
    meta.push_back({{"feature", m.feature}, {"patch", m.patch}});
  }
  j["token_meta"] = std::move(meta);
  j["temporal"] = tensor_to_json(rec.temporal);
  nlohmann::json spatial = nlohmann::json::array();
  for (const auto& patch : rec.spatial) {
    nlohmann::json arr = nlohmann::json::array();
    for (const SpatialShare& s : patch) {
      arr.push_back({{"source", s.source}, {"share", s.share}});
    }
    spatial.push_back(std::move(arr));
  }
  j["spatial"] = std::move(spatial);
  j["gate"] = rec.gate;
  j["transport_fraction"] = rec.transport_fraction;
  nlohmann::json wind = nlohmann::json::array();
  for (const PatchWindEcho& w : rec.wind) {
    wind.push_back({{"u_east", w.u_east}, {"u_north", w.u_north}, {"speed", w.speed}});
  }
  j["wind"] = std::move(wind);
  return j;
}

static AttributionRecord record_from_json(const nlohmann::json& j) {
  AttributionRecord rec;
  rec.station_id = j.at("station_id").get<std::string>();
  rec.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& m : j.at("token_meta")) {
    rec.token_meta.push_back({m.at("feature").get<std::size_t>(),
                              m.at("patch").get<std::size_t>()});
  }
  rec.temporal = tensor_from_json(j.at("temporal"));
  for (const auto& patch : j.at("spatial")) {
    std::vector<SpatialShare> shares;
    for (const auto& s : patch) {
      shares.push_back({s.at("source").get<std::string>(), s.at("share").get<double>()});
    }
    rec.spatial.push_back(std::move(shares));
  }
  rec.gate = j.at("gate").get<double>();
  rec.transport_fraction = j.at("transport_fraction").get<std::vector<double>>();
  for (const auto& w : j.at("wind")) {
    rec.wind.push_back({w.at("u_east").get<double>(), w.at("u_north").get<double>(),
                        w.at("speed").get<double>()});
  }
  return rec;
}

void export_report(const std::vector<AttributionRecord>& records, const std::string& out_dir,
                   const std::string& model_meta) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json j;
  j["version"] = 1;
  j["model_meta"] = model_meta;
  nlohmann::json arr = nlohmann::json::array();
  for (const AttributionRecord& rec : records) arr.push_back(record_to_json(rec));
  j["records"] = std::move(arr);
  write_json_file(out_dir + "/attribution.json", j);

  for (const AttributionRecord& rec : records) {
    for (auto [channel, body] :
         {std::pair<std::string, std::string>{"spatial", spatial_svg(rec)},
          {"temporal", temporal_svg(rec)},
          {"windrose", windrose_svg(rec)}}) {
      std::string path = out_dir + "/" + rec.station_id + "_" + channel + ".svg";
      std::ofstream out(path);
      if (!out) throw IoError("cannot write " + path);
      out << body;
    }
  }
}

std::vector<AttributionRecord> parse_attribution(const std::string& path) {
  nlohmann::json j = load_json_file(path);
  std::vector<AttributionRecord> records;
  for (const auto& r : j.at("records")) records.push_back(record_from_json(r));
  return records;
}

std::string spatial_svg(const AttributionRecord& record) {
  const std::size_t m_pred = record.spatial.size();
  const double bar_w = 60.0, gap = 24.0, height = 220.0, base_y = 250.0;
  const double width = 80.0 + static_cast<double>(m_pred) * (bar_w + gap);
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"300\" viewBox=\"0 0 " << width << " 300\">\n"
      << "<text x=\"10\" y=\"20\" font-size=\"13\">upwind source shares, station "
      << record.station_id << "</text>\n";
  for (std::size_t m = 0; m < m_pred; ++m) {
    double x = 50.0 + static_cast<double>(m) * (bar_w + gap);
    double y = base_y;
    std::size_t color = 0;
    for (const SpatialShare& s : record.spatial[m]) {
      double h = s.share * height;
      y -= h;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w << "\" height=\"" << h
          << "\" fill=\"" << color_for(color++) << "\"><title>" << s.source << " "
          << s.share * 100.0 << "%</title></rect>\n";
    }
    svg << "<text x=\"" << x << "\" y=\"268\" font-size=\"11\">patch " << m + 1 << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string temporal_svg(const AttributionRecord& record) {
  const std::size_t m_pred = record.temporal.dim(0);
  const std::size_t n_all = record.temporal.dim(1);
  const double cell = 14.0;
  const double width = 60.0 + static_cast<double>(n_all) * cell;
  const double height = 60.0 + static_cast<double>(m_pred) * cell;
  double max_w = 0.0;
  for (std::size_t i = 0; i < record.temporal.numel(); ++i) {
    max_w = std::max(max_w, record.temporal[i]);
  }
  if (max_w <= 0.0) max_w = 1.0;
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<text x=\"10\" y=\"20\" font-size=\"13\">time-feature attention, station "
      << record.station_id << "</text>\n";
  for (std::size_t m = 0; m < m_pred; ++m) {
    for (std::size_t t = 0; t < n_all; ++t) {
      double v = record.temporal.at(m, t) / max_w;
      int level = static_cast<int>(255.0 * (1.0 - v));
      svg << "<rect x=\"" << 40.0 + static_cast<double>(t) * cell << "\" y=\""
          << 40.0 + static_cast<double>(m) * cell << "\" width=\"" << cell << "\" height=\""
          << cell << "\" fill=\"rgb(" << level << "," << level << ",255)\"><title>feature "
          << record.feature_names[record.token_meta[t].feature] << " patch "
          << record.token_meta[t].patch << "</title></rect>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string windrose_svg(const AttributionRecord& record) {
  const double cx = 130.0, cy = 150.0, radius = 90.0;
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"260\" height=\"300\" "
         "viewBox=\"0 0 260 300\">\n"
      << "<text x=\"10\" y=\"20\" font-size=\"13\">per-patch wind, station " << record.station_id
      << "</text>\n"
      << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << radius
      << "\" fill=\"none\" stroke=\"#999\"/>\n"
      << "<text x=\"" << cx - 4 << "\" y=\"" << cy - radius - 6 << "\" font-size=\"11\">N</text>\n";
  double max_speed = 0.0;
  for (const PatchWindEcho& w : record.wind) max_speed = std::max(max_speed, w.speed);
  if (max_speed <= 0.0) max_speed = 1.0;
  for (std::size_t m = 0; m < record.wind.size(); ++m) {
    const PatchWindEcho& w = record.wind[m];
    double len = radius * w.speed / max_speed;
    double x2 = cx + w.u_east * len;
    double y2 = cy - w.u_north * len;
    svg << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << x2 << "\" y2=\"" << y2
        << "\" stroke=\"" << color_for(m) << "\" stroke-width=\"2\"><title>patch " << m + 1
        << " speed " << w.speed << " m/s</title></line>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace windcast
