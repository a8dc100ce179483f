#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msclip/eval.hpp"
#include "msclip/synth.hpp"
#include "msclip/trainer.hpp"

namespace msclip {

// Run settings from one JSON document with sections "synth", "model",
// "train", "data", "eval", "paths". Every field is optional and falls back
// to the compiled default, so a minimal config can be {}.
struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  std::vector<BandId> data_bands = rgb_bands();
  EvalOptions eval;
  std::string data_dir = "data";
  std::string out_dir = "out";
};

nlohmann::json load_config_file(const std::string& path);  // IoError/ConfigError

// "a.b.c=value" assignments applied onto the JSON tree before parsing.
// Values parse as JSON when possible, otherwise as plain strings.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig run_config_from_json(const nlohmann::json& config);

// "rgb", "10-band", "12-band", or comma-separated band names.
std::vector<BandId> band_list_from_string(const std::string& text);

MultilabelMethod multilabel_method_from_string(const std::string& text);

}  // namespace msclip
