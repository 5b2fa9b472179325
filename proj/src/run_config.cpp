#include "windcast/run_config.hpp"

#include <algorithm>

#include "windcast/json_util.hpp"

namespace windcast {

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  nlohmann::json j = load_json_file(path);
  reject_unknown(j, {"paths", "features", "model", "train", "split", "windows", "simulate",
                     "predict", "eval", "attribute"},
                 "config root");
  RunConfig cfg;

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    reject_unknown(p, {"stations", "series", "out_dir", "checkpoint"}, "paths");
    cfg.stations_path = p.value("stations", std::string());
    cfg.series_path = p.value("series", std::string());
    cfg.out_dir = p.value("out_dir", std::string("."));
    cfg.checkpoint_path = p.value("checkpoint", std::string());
  }

  if (j.contains("features")) {
    if (!j["features"].is_array()) throw ConfigError("'features' must be an array");
    for (const auto& f : j["features"]) cfg.features.push_back(feature_spec_from_json(f));
  }

  if (j.contains("model")) cfg.model = model_config_from_json(j["model"]);

  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t,
                   {"lr", "beta1", "beta2", "adam_eps", "batch_size", "max_epochs", "max_steps",
                    "patience", "lambda_eps", "seed", "threads"},
                   "train");
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
    cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
    cfg.train.adam_eps = t.value("adam_eps", cfg.train.adam_eps);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
    cfg.train.max_steps = t.value("max_steps", cfg.train.max_steps);
    cfg.train.patience = t.value("patience", cfg.train.patience);
    cfg.train.lambda_eps = t.value("lambda_eps", cfg.train.lambda_eps);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.threads = t.value("threads", cfg.train.threads);
  }

  if (j.contains("split")) {
    const auto& s = j["split"];
    reject_unknown(s, {"train", "val", "test"}, "split");
    cfg.split.train = s.value("train", cfg.split.train);
    cfg.split.val = s.value("val", cfg.split.val);
    cfg.split.test = s.value("test", cfg.split.test);
  }

  if (j.contains("windows")) {
    const auto& w = j["windows"];
    reject_unknown(w, {"stride", "allow_constant_features"}, "windows");
    cfg.stride = w.value("stride", cfg.stride);
    cfg.allow_constant_features = w.value("allow_constant_features", cfg.allow_constant_features);
  }

  if (j.contains("simulate")) {
    const auto& s = j["simulate"];
    reject_unknown(s, {"preset", "hours", "seed"}, "simulate");
    cfg.sim_preset = s.value("preset", cfg.sim_preset);
    cfg.sim_hours = s.value("hours", cfg.sim_hours);
    cfg.sim_seed = s.value("seed", cfg.sim_seed);
  }

  if (j.contains("predict")) {
    const auto& p = j["predict"];
    reject_unknown(p, {"split", "stride"}, "predict");
    cfg.predict_split = p.value("split", cfg.predict_split);
    cfg.predict_stride = p.value("stride", cfg.predict_stride);
  }

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown(e, {"split", "horizons"}, "eval");
    cfg.eval_split = e.value("split", cfg.eval_split);
    if (e.contains("horizons")) {
      cfg.eval_horizons = e["horizons"].get<std::vector<std::size_t>>();
    }
  }

  if (j.contains("attribute")) {
    const auto& a = j["attribute"];
    reject_unknown(a, {"split", "window_index", "stations"}, "attribute");
    cfg.attribute_split = a.value("split", cfg.attribute_split);
    cfg.attribute_window = a.value("window_index", cfg.attribute_window);
    if (a.contains("stations")) {
      cfg.attribute_stations = a["stations"].get<std::vector<std::string>>();
    }
  }
  return cfg;
}

std::string resolved_checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint_path.empty() ? cfg.out_dir + "/checkpoint.json" : cfg.checkpoint_path;
}

}  // namespace windcast
