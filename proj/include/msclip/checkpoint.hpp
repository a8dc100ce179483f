#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msclip/image.hpp"
#include "msclip/model.hpp"

namespace msclip {

// Everything needed to run the model on new data without side files:
// band order, normalization statistics, and the tokenizer vocabulary.
struct CheckpointMeta {
  std::vector<BandId> bands;
  NormalizationStats norm_stats;
  std::vector<std::string> vocab_tokens;
};

struct Checkpoint {
  ModelParameters params;
  CheckpointMeta meta;
};

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Binary container: magic "MSCK", little-endian u16 version (1), a JSON
// header (model config, bands, normalization stats, vocabulary), then the
// tensors sorted by name as float32 payloads with explicit shapes.
// save(load(x)) is byte-identical to x.
void save_checkpoint(const std::string& path, const ModelParameters& params,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace msclip
