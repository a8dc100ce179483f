#include "msclip/runconfig.hpp"

#include <fstream>

#include "msclip/errors.hpp"

namespace msclip {

namespace {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfigError(std::string("config field '") + key +
                             "': " + e.what());
  }
}

std::vector<BandId> read_bands(const nlohmann::json& j, const char* key,
                               std::vector<BandId> fallback) {
  if (!j.contains(key)) return fallback;
  std::vector<std::string> names;
  read_field(j, key, names);
  try {
    return bands_from_names(names);
  } catch (const ConfigError&) {
    throw;
  }
}

}  // namespace

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfigError(std::string("config parse: ") + e.what());
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidConfigError("override must look like a.b.c=value: " +
                             assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // bare strings need no quoting
  }

  nlohmann::json* node = &config;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos
                                                 ? std::string::npos
                                                 : dot - pos);
    if (part.empty()) throw InvalidConfigError("empty path segment: " + key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (!node->is_object() && !node->is_null()) {
      throw InvalidConfigError("override path crosses a non-object: " + key);
    }
    pos = dot + 1;
  }
}

RunConfig run_config_from_json(const nlohmann::json& config) {
  if (!config.is_object()) throw InvalidConfigError("config root must be an object");
  RunConfig rc;

  if (config.contains("synth")) {
    const auto& j = config.at("synth");
    read_field(j, "seed", rc.synth.seed);
    read_field(j, "num_classes", rc.synth.num_classes);
    if (j.contains("per_class")) {
      const auto& pc = j.at("per_class");
      int v = 0;
      if (pc.contains("train")) { read_field(pc, "train", v); rc.synth.per_class_count[Split::Train] = v; }
      if (pc.contains("val")) { read_field(pc, "val", v); rc.synth.per_class_count[Split::Val] = v; }
      if (pc.contains("test")) { read_field(pc, "test", v); rc.synth.per_class_count[Split::Test] = v; }
    }
    read_field(j, "image_size", rc.synth.image_size);
    rc.synth.band_set = read_bands(j, "bands", rc.synth.band_set);
    read_field(j, "spectral_only_classes", rc.synth.spectral_only_classes);
    read_field(j, "noise_std", rc.synth.noise_std);
    read_field(j, "texture_amplitude_factor", rc.synth.texture_amplitude_factor);
    read_field(j, "qa_pairs_per_scene", rc.synth.qa_pairs_per_scene);
    read_field(j, "class_names", rc.synth.class_names);
    read_field(j, "caption_templates", rc.synth.caption_templates);
  }

  if (config.contains("model")) {
    const auto& j = config.at("model");
    read_field(j, "image_size", rc.model.image_size);
    read_field(j, "patch_size", rc.model.patch_size);
    read_field(j, "in_channels", rc.model.in_channels);
    read_field(j, "vision_dim", rc.model.vision_dim);
    read_field(j, "vision_depth", rc.model.vision_depth);
    read_field(j, "vision_heads", rc.model.vision_heads);
    read_field(j, "text_dim", rc.model.text_dim);
    read_field(j, "text_depth", rc.model.text_depth);
    read_field(j, "text_heads", rc.model.text_heads);
    read_field(j, "vocab_size", rc.model.vocab_size);
    read_field(j, "context_length", rc.model.context_length);
    read_field(j, "proj_dim", rc.model.proj_dim);
    read_field(j, "mlp_ratio", rc.model.mlp_ratio);
  }

  if (config.contains("train")) {
    const auto& j = config.at("train");
    read_field(j, "peak_lr", rc.train.peak_lr);
    read_field(j, "warmup_steps", rc.train.warmup_steps);
    read_field(j, "total_steps", rc.train.total_steps);
    read_field(j, "batch_size", rc.train.batch_size);
    read_field(j, "weight_decay", rc.train.weight_decay);
    read_field(j, "beta1", rc.train.beta1);
    read_field(j, "adam_beta1", rc.train.beta1);
    read_field(j, "beta2", rc.train.beta2);
    read_field(j, "adam_beta2", rc.train.beta2);
    read_field(j, "eps", rc.train.eps);
    read_field(j, "adam_eps", rc.train.eps);
    read_field(j, "clip_grad_norm", rc.train.clip_grad_norm);
    read_field(j, "seed", rc.train.seed);
    read_field(j, "val_every", rc.train.val_every);
    read_field(j, "max_epochs", rc.train.max_epochs);
    for (const char* key : {"freeze", "freeze_policy"}) {
      if (j.contains(key)) {
        std::string policy;
        read_field(j, key, policy);
        rc.train.freeze = freeze_policy_from_string(policy);
      }
    }
  }

  if (config.contains("data")) {
    rc.data_bands = read_bands(config.at("data"), "bands", rc.data_bands);
  }

  if (config.contains("eval")) {
    const auto& j = config.at("eval");
    rc.eval.bands = read_bands(j, "bands", rc.eval.bands);
    read_field(j, "templates", rc.eval.templates);
    if (j.contains("method")) {
      std::string m;
      read_field(j, "method", m);
      rc.eval.method = multilabel_method_from_string(m);
    }
    read_field(j, "negative_class", rc.eval.negative_class_name);
    read_field(j, "retrieval_k", rc.eval.retrieval_k);
    read_field(j, "batch_size", rc.eval.batch_size);
  }

  if (config.contains("paths")) {
    const auto& j = config.at("paths");
    read_field(j, "data_dir", rc.data_dir);
    read_field(j, "out_dir", rc.out_dir);
  }
  return rc;
}

std::vector<BandId> band_list_from_string(const std::string& text) {
  if (text == "rgb") return rgb_bands();
  if (text == "10-band") return ten_band_default();
  if (text == "12-band") return twelve_band_default();
  std::vector<std::string> names;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    std::string name = text.substr(pos, comma - pos);
    if (!name.empty()) names.push_back(name);
    pos = comma + 1;
  }
  if (names.empty()) throw InvalidConfigError("empty band list: " + text);
  return bands_from_names(names);
}

MultilabelMethod multilabel_method_from_string(const std::string& text) {
  if (text == "eq2") return MultilabelMethod::MeanOfOthers;
  if (text == "negclass" || text == "negative_class") {
    return MultilabelMethod::NegativeClass;
  }
  throw InvalidConfigError("unknown multilabel method: " + text);
}

}  // namespace msclip
