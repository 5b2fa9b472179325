#pragma once

// nlohmann converters shared by checkpoint, run-config and attribution I/O.
// Deliberately kept out of the public module headers; include from .cpp only.

#include <string>

#include "json.hpp"
#include "windcast/dataio.hpp"
#include "windcast/decoder.hpp"
#include "windcast/model.hpp"

namespace windcast {

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

nlohmann::json feature_spec_to_json(const FeatureSpec& f);
FeatureSpec feature_spec_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace windcast
