#pragma once

#include <string>
#include <vector>

#include "windcast/model.hpp"
#include "windcast/training.hpp"

namespace windcast {

struct SplitConfig {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

/// Everything a run needs, parsed from one JSON file. Unknown keys anywhere
/// are rejected so config typos fail loudly instead of silently defaulting.
struct RunConfig {
  std::string stations_path;
  std::string series_path;
  std::string out_dir = ".";
  std::string checkpoint_path;  // empty -> <out_dir>/checkpoint.json

  std::vector<FeatureSpec> features;
  ModelConfig model;
  TrainConfig train;
  SplitConfig split;
  std::size_t stride = 1;
  bool allow_constant_features = false;

  std::string sim_preset = "grid9";
  std::size_t sim_hours = 4000;
  std::uint64_t sim_seed = 7;

  std::string predict_split = "test";
  std::size_t predict_stride = 0;  // 0 -> horizon

  std::string eval_split = "test";
  std::vector<std::size_t> eval_horizons;  // empty -> {24,48,72} clipped to H

  std::string attribute_split = "test";
  std::size_t attribute_window = 0;
  std::vector<std::string> attribute_stations;  // empty -> all
};

RunConfig load_run_config(const std::string& path);

std::string resolved_checkpoint_path(const RunConfig& cfg);

}  // namespace windcast
