#include "windcast/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "windcast/attribution.hpp"
#include "windcast/json_util.hpp"
#include "windcast/run_config.hpp"
#include "windcast/simulator.hpp"

namespace windcast {

namespace {

struct LoadedData {
  StationNetwork network;
  SeriesFrame frame;
  std::vector<FeatureSpec> specs;
  Normalizer norm;
  SplitRanges splits;
  ModelLayout layout;
};

std::vector<std::string> raw_columns(const std::vector<FeatureSpec>& specs) {
  std::vector<std::string> cols;
  for (const FeatureSpec& f : specs) {
    if (f.role != FeatureRole::kCalendar) cols.push_back(f.name);
  }
  return cols;
}

LoadedData load_for_training(const RunConfig& cfg) {
  if (cfg.stations_path.empty() || cfg.series_path.empty()) {
    throw ConfigError("config must name paths.stations and paths.series");
  }
  for (const FeatureSpec& f : cfg.features) {
    if (f.role == FeatureRole::kCalendar) {
      throw ConfigError("calendar features are generated internally; drop '" + f.name +
                        "' from the config");
    }
  }
  LoadedData data;
  data.network = load_network(cfg.stations_path);
  data.specs = cfg.features;
  data.frame = load_series(cfg.series_path, data.network, raw_columns(data.specs));
  std::size_t horizon = cfg.model.horizon;
  if (cfg.model.add_calendar) {
    auto cal = add_calendar_features(data.frame, horizon);
    data.specs.insert(data.specs.end(), cal.begin(), cal.end());
  }
  data.layout = make_layout(cfg.model, data.specs, data.network.size());
  data.splits = chronological_split(data.frame.hours(), cfg.split.train, cfg.split.val,
                                    cfg.split.test, data.layout.lookback + data.layout.horizon);
  data.norm = Normalizer::fit(data.frame, data.splits.train.first, data.splits.train.second,
                              cfg.allow_constant_features);
  return data;
}

LoadedData load_for_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt) {
  if (cfg.stations_path.empty() || cfg.series_path.empty()) {
    throw ConfigError("config must name paths.stations and paths.series");
  }
  LoadedData data;
  data.network = load_network(cfg.stations_path);
  if (data.network.station_ids != ckpt.meta.station_ids) {
    throw ConfigError("stations file does not match the checkpoint's station list");
  }
  data.specs = ckpt.meta.features;
  data.frame = load_series(cfg.series_path, data.network, raw_columns(data.specs));
  bool has_calendar = false;
  for (const FeatureSpec& f : data.specs) {
    if (f.role == FeatureRole::kCalendar) has_calendar = true;
  }
  if (has_calendar) add_calendar_features(data.frame, ckpt.meta.model.horizon);
  data.layout = make_layout(ckpt.meta.model, data.specs, data.network.size());
  data.splits = chronological_split(data.frame.hours(), cfg.split.train, cfg.split.val,
                                    cfg.split.test, data.layout.lookback + data.layout.horizon);
  if (ckpt.norm_means.size() != data.frame.feature_count()) {
    throw ConfigError("checkpoint normalizer does not match the feature columns");
  }
  data.norm.set(ckpt.norm_means, ckpt.norm_stds);
  return data;
}

std::pair<std::size_t, std::size_t> split_range(const LoadedData& data, const std::string& name) {
  if (name == "train") return data.splits.train;
  if (name == "val") return data.splits.val;
  if (name == "test") return data.splits.test;
  throw ConfigError("unknown split '" + name + "' (use train, val or test)");
}

WindowConfig window_config(const ModelLayout& layout, std::size_t stride, bool require_target) {
  WindowConfig wc;
  wc.lookback = layout.lookback;
  wc.horizon = layout.horizon;
  wc.patch_len = layout.patch_len;
  wc.stride = stride;
  wc.per_station_wind = layout.per_station_wind;
  wc.require_target = require_target;
  return wc;
}

int cmd_simulate(const std::string& preset_name, std::uint64_t seed, std::size_t hours,
                 const std::string& out_dir) {
  SyntheticScenario scenario = preset(preset_name, seed);
  SimResult result = simulate(scenario, hours);
  std::filesystem::create_directories(out_dir);
  write_stations_csv(out_dir + "/stations.csv", scenario.network);
  write_series_csv(out_dir + "/series.csv", result.frame);
  write_truth_json(out_dir + "/truth.json", result, scenario.network);
  std::cout << "simulated " << hours << " hours over " << scenario.network.size()
            << " stations into " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  LoadedData data = load_for_training(cfg);
  WindowConfig wc = window_config(data.layout, cfg.stride, true);
  auto train_ws = make_windows(data.frame, data.norm, data.specs, wc, data.splits.train.first,
                               data.splits.train.second);
  auto val_ws = make_windows(data.frame, data.norm, data.specs, wc, data.splits.val.first,
                             data.splits.val.second);
  std::cout << "windows: " << train_ws.size() << " train, " << val_ws.size() << " val\n";

  ModelParams params = init_params(data.layout, data.network, cfg.train.seed);
  TrainResult result = train(data.layout, std::move(params), data.network, train_ws, val_ws,
                             cfg.train);

  std::filesystem::create_directories(cfg.out_dir);
  Checkpoint ckpt;
  ckpt.meta.code_version = kCodeVersion;
  ckpt.meta.seed = cfg.train.seed;
  ckpt.meta.model = cfg.model;
  ckpt.meta.model.lookback = data.layout.lookback;
  ckpt.meta.lambda_eps = cfg.train.lambda_eps;
  ckpt.meta.features = data.specs;
  ckpt.meta.station_ids = data.network.station_ids;
  ckpt.params = result.best_params;
  ckpt.norm_means = data.norm.means();
  ckpt.norm_stds = data.norm.stds();
  save_checkpoint(resolved_checkpoint_path(cfg), ckpt);
  write_history_csv(cfg.out_dir + "/history.csv", result.history);

  std::cout << "trained " << result.steps << " steps, best val MSE " << result.best_val_mse
            << " at epoch " << result.best_epoch << (result.diverged ? " (diverged)" : "")
            << "\n";
  return result.diverged ? 2 : 0;
}

int cmd_predict(const RunConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(resolved_checkpoint_path(cfg));
  LoadedData data = load_for_checkpoint(cfg, ckpt);
  std::size_t stride = cfg.predict_stride == 0 ? data.layout.horizon : cfg.predict_stride;
  WindowConfig wc = window_config(data.layout, stride, false);
  auto range = split_range(data, cfg.predict_split);
  auto windows = make_windows(data.frame, data.norm, data.specs, wc, range.first, range.second);
  if (windows.empty()) throw ConfigError("no prediction windows in split " + cfg.predict_split);

  std::size_t target = target_feature_index(data.specs);
  std::size_t target_col = data.frame.column_index(data.specs[target].name);
  std::filesystem::create_directories(cfg.out_dir);
  std::string path = cfg.out_dir + "/forecast.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "timestamp,station_id,horizon_hour,yhat,y_if_known\n";
  out.precision(10);
  for (const WindowSample& w : windows) {
    ForecastBundle bundle = forward(data.layout, ckpt.params, data.network, w);
    for (std::size_t s = 0; s < data.network.size(); ++s) {
      for (std::size_t h = 0; h < data.layout.horizon; ++h) {
        out << format_iso_hour(w.anchor_epoch_hour) << "," << data.network.station_ids[s] << ","
            << h + 1 << "," << data.norm.invert(bundle.y_hat.at(s, h), target_col) << ",";
        if (w.has_target()) out << data.norm.invert(w.y.at(s, h), target_col);
        out << "\n";
      }
    }
  }
  std::cout << "wrote " << path << " (" << windows.size() << " windows)\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(resolved_checkpoint_path(cfg));
  LoadedData data = load_for_checkpoint(cfg, ckpt);
  WindowConfig wc = window_config(data.layout, cfg.stride, true);
  auto range = split_range(data, cfg.eval_split);
  auto windows = make_windows(data.frame, data.norm, data.specs, wc, range.first, range.second);
  if (windows.empty()) throw ConfigError("no evaluation windows in split " + cfg.eval_split);

  std::vector<std::size_t> horizons = cfg.eval_horizons;
  if (horizons.empty()) {
    for (std::size_t h : {std::size_t{24}, std::size_t{48}, std::size_t{72}}) {
      if (h <= data.layout.horizon) horizons.push_back(h);
    }
    if (horizons.empty()) horizons.push_back(data.layout.horizon);
  }
  std::size_t target = target_feature_index(data.specs);
  std::size_t target_col = data.frame.column_index(data.specs[target].name);
  MetricsReport report =
      evaluate(data.layout, ckpt.params, data.network, windows, data.norm.means()[target_col],
               data.norm.stds()[target_col], horizons, cfg.train.threads);

  nlohmann::json rows = nlohmann::json::array();
  std::cout << "horizon        MAE        MSE\n";
  for (const MetricRow& r : report.rows) {
    rows.push_back({{"horizon", r.horizon}, {"mae", r.mae}, {"mse", r.mse}});
    std::printf("%7zu %10.4f %10.4f\n", r.horizon, r.mae, r.mse);
  }
  std::printf("    AVG %10.4f %10.4f\n", report.avg.mae, report.avg.mse);
  nlohmann::json j;
  j["split"] = cfg.eval_split;
  j["window_count"] = report.window_count;
  j["rows"] = std::move(rows);
  j["avg"] = {{"mae", report.avg.mae}, {"mse", report.avg.mse}};
  std::filesystem::create_directories(cfg.out_dir);
  write_json_file(cfg.out_dir + "/metrics.json", j);
  std::cout << "wrote " << cfg.out_dir << "/metrics.json\n";
  return 0;
}

int cmd_attribute(const RunConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(resolved_checkpoint_path(cfg));
  LoadedData data = load_for_checkpoint(cfg, ckpt);
  WindowConfig wc = window_config(data.layout, data.layout.horizon, false);
  auto range = split_range(data, cfg.attribute_split);
  auto windows = make_windows(data.frame, data.norm, data.specs, wc, range.first, range.second);
  if (cfg.attribute_window >= windows.size()) {
    throw ConfigError("attribute.window_index out of range (split holds " +
                      std::to_string(windows.size()) + " windows)");
  }
  const WindowSample& w = windows[cfg.attribute_window];
  ForecastBundle bundle = forward(data.layout, ckpt.params, data.network, w);
  auto records = build_attribution(data.layout, bundle, w, data.network);
  if (!cfg.attribute_stations.empty()) {
    std::vector<AttributionRecord> kept;
    for (AttributionRecord& r : records) {
      for (const std::string& want : cfg.attribute_stations) {
        if (r.station_id == want) {
          kept.push_back(std::move(r));
          break;
        }
      }
    }
    records = std::move(kept);
  }
  std::ostringstream meta;
  meta << kCodeVersion << " H=" << data.layout.horizon << " d=" << data.layout.d
       << " anchor=" << format_iso_hour(w.anchor_epoch_hour);
  export_report(records, cfg.out_dir, meta.str());
  std::cout << "wrote " << records.size() << " attribution records to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  LoadedData data = load_for_training(cfg);
  WindowConfig wc = window_config(data.layout, cfg.stride, true);
  auto windows = make_windows(data.frame, data.norm, data.specs, wc, data.splits.train.first,
                              data.splits.train.second);
  if (windows.empty()) throw ConfigError("no training windows for gradcheck");
  std::vector<const WindowSample*> batch;
  for (std::size_t i = 0; i < std::min<std::size_t>(2, windows.size()); ++i) {
    batch.push_back(&windows[i]);
  }
  ModelParams params = init_params(data.layout, data.network, cfg.train.seed);
  GradCheckReport report = gradcheck(data.layout, params, data.network, batch,
                                     cfg.train.lambda_eps, cfg.train.seed);
  std::cout << format_gradcheck_report(report);
  return report.pass ? 0 : 2;
}

int classify_error(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
      dynamic_cast<const SplitTooShort*>(&e) || dynamic_cast<const ConstantFeature*>(&e) ||
      dynamic_cast<const NetworkTooSmall*>(&e) || dynamic_cast<const InvalidCoordinate*>(&e) ||
      dynamic_cast<const DegenerateGeometry*>(&e)) {
    return 1;
  }
  return 2;
}

}  // namespace

const char* kConfigReference = R"(run-config JSON keys:
  paths:    stations, series, out_dir, checkpoint
  features: [{name, availability, is_target, role, wind_component}]
            role: pollutant | meteorology_forecast | exogenous_forecast
            wind_component: speed | direction (one of each enables transport)
  model:    d, n_heads, patch_len, horizon, lookback (0 -> horizon+24),
            activation (identity|gelu|softplus), per_channel_gate,
            per_station_wind, transport_enabled, add_calendar
  train:    lr, beta1, beta2, adam_eps, batch_size, max_epochs, max_steps,
            patience, lambda_eps, seed, threads
  split:    train, val, test (fractions summing to 1)
  windows:  stride, allow_constant_features
  simulate: preset (line3|grid9|rotating_wind9), hours, seed
  predict:  split, stride (0 -> horizon)
  eval:     split, horizons
  attribute: split, window_index, stations
Unknown keys are rejected.)";

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"windcast: physics-guided interpretable multi-station forecasting"};
  app.require_subcommand(1);
  app.footer(kConfigReference);

  std::string config_path, preset_name = "grid9", out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t hours = 4000;
  std::size_t threads = 0;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path, "run-config JSON (simulate block)");
  sim->add_option("--preset", preset_name, "scenario preset: line3, grid9, rotating_wind9");
  sim->add_option("--seed", seed, "scenario seed")->each([&](const std::string&) {
    seed_set = true;
  });
  sim->add_option("--hours", hours, "hours to simulate");
  sim->add_option("--out", out_dir, "output directory");

  auto add_config_cmd = [&](const char* name, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", config_path, "run-config JSON")->required();
    cmd->add_option("--threads", threads, "worker threads (1 = bit-reproducible)");
    cmd->add_option("--out", out_dir, "override paths.out_dir");
    return cmd;
  };
  auto* train_cmd = add_config_cmd("train", "train a model and write checkpoint.json");
  train_cmd->add_option("--seed", seed, "override train.seed")->each([&](const std::string&) {
    seed_set = true;
  });
  auto* predict_cmd = add_config_cmd("predict", "write forecast.csv from a checkpoint");
  auto* eval_cmd = add_config_cmd("eval", "write metrics.json for a checkpoint");
  auto* attr_cmd = add_config_cmd("attribute", "export attribution.json and SVG figures");
  auto* grad_cmd = add_config_cmd("gradcheck", "finite-difference gradient certification");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sim->parsed()) {
      std::string dir = out_dir;
      std::size_t sim_hours = hours;
      std::string sim_preset = preset_name;
      std::uint64_t sim_seed = seed_set ? seed : 7;
      if (!config_path.empty()) {
        RunConfig cfg = load_run_config(config_path);
        sim_preset = sim->count("--preset") ? preset_name : cfg.sim_preset;
        if (!sim->count("--hours")) sim_hours = cfg.sim_hours;
        if (!seed_set) sim_seed = cfg.sim_seed;
        if (dir.empty()) dir = cfg.out_dir;
      }
      if (dir.empty()) dir = ".";
      return cmd_simulate(sim_preset, sim_seed, sim_hours, dir);
    }

    RunConfig cfg = load_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (threads != 0) cfg.train.threads = threads;
    if (seed_set) cfg.train.seed = seed;

    if (train_cmd->parsed()) return cmd_train(cfg);
    if (predict_cmd->parsed()) return cmd_predict(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    if (attr_cmd->parsed()) return cmd_attribute(cfg);
    if (grad_cmd->parsed()) return cmd_gradcheck(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify_error(e);
  }
  return 1;
}

}  // namespace windcast
