#include "windcast/json_util.hpp"

#include <fstream>

namespace windcast {

namespace {

nlohmann::json tensor_level(const Tensor& t, std::size_t axis, std::size_t offset,
                            std::size_t stride) {
  nlohmann::json arr = nlohmann::json::array();
  const std::size_t n = t.dim(axis);
  if (axis + 1 == t.rank()) {
    for (std::size_t i = 0; i < n; ++i) arr.push_back(t[offset + i]);
  } else {
    const std::size_t inner = stride / n;
    for (std::size_t i = 0; i < n; ++i) {
      arr.push_back(tensor_level(t, axis + 1, offset + i * inner, inner));
    }
  }
  return arr;
}

void collect_shape(const nlohmann::json& j, std::vector<std::size_t>& shape) {
  if (!j.is_array()) return;
  shape.push_back(j.size());
  if (!j.empty()) collect_shape(j.front(), shape);
}

void collect_values(const nlohmann::json& j, std::vector<double>& out, std::size_t depth,
                    const std::vector<std::size_t>& shape) {
  if (depth == shape.size()) {
    if (!j.is_number()) throw SchemaError("tensor json holds a non-numeric leaf");
    out.push_back(j.get<double>());
    return;
  }
  if (!j.is_array() || j.size() != shape[depth]) {
    throw SchemaError("ragged tensor json");
  }
  for (const auto& item : j) collect_values(item, out, depth + 1, shape);
}

}  // namespace

nlohmann::json tensor_to_json(const Tensor& t) {
  if (t.rank() == 0) return nlohmann::json::array();
  std::size_t stride = t.numel() / t.dim(0);
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    if (t.rank() == 1) {
      arr.push_back(t[i]);
    } else {
      arr.push_back(tensor_level(t, 1, i * stride, stride));
    }
  }
  return arr;
}

Tensor tensor_from_json(const nlohmann::json& j) {
  std::vector<std::size_t> shape;
  collect_shape(j, shape);
  if (shape.empty()) throw SchemaError("tensor json must be an array");
  std::vector<double> values;
  values.reserve(16);
  collect_values(j, values, 0, shape);
  return Tensor(std::move(shape), std::move(values));
}

nlohmann::json feature_spec_to_json(const FeatureSpec& f) {
  nlohmann::json j;
  j["name"] = f.name;
  j["availability"] = f.availability;
  j["is_target"] = f.is_target;
  j["role"] = feature_role_to_string(f.role);
  if (f.wind_component == WindComponent::kSpeed) j["wind_component"] = "speed";
  if (f.wind_component == WindComponent::kDirection) j["wind_component"] = "direction";
  return j;
}

FeatureSpec feature_spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"name", "availability", "is_target", "role",
                                                 "wind_component"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown feature key '" + it.key() + "'");
    }
  }
  FeatureSpec f;
  if (!j.contains("name")) throw ConfigError("feature entry missing 'name'");
  f.name = j.at("name").get<std::string>();
  f.availability = j.value("availability", std::size_t{0});
  f.is_target = j.value("is_target", false);
  f.role = feature_role_from_string(j.value("role", std::string("exogenous_forecast")));
  std::string wc = j.value("wind_component", std::string());
  if (wc == "speed") {
    f.wind_component = WindComponent::kSpeed;
  } else if (wc == "direction") {
    f.wind_component = WindComponent::kDirection;
  } else if (!wc.empty()) {
    throw ConfigError("wind_component must be 'speed' or 'direction'");
  }
  return f;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["d"] = cfg.d;
  j["n_heads"] = cfg.n_heads;
  j["patch_len"] = cfg.patch_len;
  j["horizon"] = cfg.horizon;
  j["lookback"] = cfg.lookback;
  j["activation"] = activation_to_string(cfg.activation);
  j["per_channel_gate"] = cfg.per_channel_gate;
  j["per_station_wind"] = cfg.per_station_wind;
  j["transport_enabled"] = cfg.transport_enabled;
  j["add_calendar"] = cfg.add_calendar;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "d", "n_heads", "patch_len", "horizon", "lookback", "activation",
      "per_channel_gate", "per_station_wind", "transport_enabled", "add_calendar"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown model key '" + it.key() + "'");
    }
  }
  ModelConfig cfg;
  cfg.d = j.value("d", cfg.d);
  cfg.n_heads = j.value("n_heads", cfg.n_heads);
  cfg.patch_len = j.value("patch_len", cfg.patch_len);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.lookback = j.value("lookback", cfg.lookback);
  cfg.activation = activation_from_string(j.value("activation", std::string("identity")));
  cfg.per_channel_gate = j.value("per_channel_gate", cfg.per_channel_gate);
  cfg.per_station_wind = j.value("per_station_wind", cfg.per_station_wind);
  cfg.transport_enabled = j.value("transport_enabled", cfg.transport_enabled);
  cfg.add_calendar = j.value("add_calendar", cfg.add_calendar);
  return cfg;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace windcast
