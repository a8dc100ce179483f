#include "msclip/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "msclip/errors.hpp"
#include "msclip/rng.hpp"

namespace msclip {

namespace {

int mlp_dim_for(int dim, double ratio) {
  double d = dim * ratio;
  int out = static_cast<int>(std::lround(d));
  if (out <= 0 || std::abs(d - out) > 1e-9) {
    throw InvalidConfigError("mlp_ratio must give an integral hidden size");
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

int ModelConfig::vision_mlp_dim() const {
  return mlp_dim_for(vision_dim, mlp_ratio);
}

int ModelConfig::text_mlp_dim() const { return mlp_dim_for(text_dim, mlp_ratio); }

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw InvalidConfigError("image_size must be a positive multiple of patch_size");
  }
  if (in_channels <= 0) throw InvalidConfigError("in_channels must be positive");
  if (vision_dim <= 0 || vision_depth <= 0 || vision_heads <= 0 ||
      vision_dim % vision_heads != 0) {
    throw InvalidConfigError("vision tower dims/heads invalid");
  }
  if (text_dim <= 0 || text_depth <= 0 || text_heads <= 0 ||
      text_dim % text_heads != 0) {
    throw InvalidConfigError("text tower dims/heads invalid");
  }
  if (vocab_size < 4) throw InvalidConfigError("vocab_size must cover the special tokens");
  if (context_length < 3) throw InvalidConfigError("context_length must be at least 3");
  if (proj_dim <= 0) throw InvalidConfigError("proj_dim must be positive");
  mlp_dim_for(vision_dim, mlp_ratio);
  mlp_dim_for(text_dim, mlp_ratio);
}

void ModelParameters::clamp_log_temperature() {
  double lt = log_temperature();
  const double max_lt = std::log(100.0);
  if (lt > max_lt) set_log_temperature(max_lt);
}

namespace {

void add_block_shapes(std::map<std::string, std::vector<std::size_t>>& shapes,
                      const std::string& prefix, int depth, int dim, int mlp) {
  const auto d = static_cast<std::size_t>(dim);
  const auto m = static_cast<std::size_t>(mlp);
  for (int i = 0; i < depth; ++i) {
    const std::string base = prefix + ".blocks." + std::to_string(i);
    shapes[base + ".ln1.gamma"] = {d};
    shapes[base + ".ln1.beta"] = {d};
    shapes[base + ".ln2.gamma"] = {d};
    shapes[base + ".ln2.beta"] = {d};
    for (const char* part : {"q", "k", "v", "out"}) {
      shapes[base + ".attn." + part + ".weight"] = {d, d};
      shapes[base + ".attn." + part + ".bias"] = {d};
    }
    shapes[base + ".mlp.fc1.weight"] = {d, m};
    shapes[base + ".mlp.fc1.bias"] = {m};
    shapes[base + ".mlp.fc2.weight"] = {m, d};
    shapes[base + ".mlp.fc2.bias"] = {d};
  }
}

std::map<std::string, std::vector<std::size_t>> parameter_shapes(
    const ModelConfig& cfg) {
  std::map<std::string, std::vector<std::size_t>> shapes;
  const auto vd = static_cast<std::size_t>(cfg.vision_dim);
  const auto td = static_cast<std::size_t>(cfg.text_dim);
  shapes["vision.patch_embed.weight"] = {
      vd, static_cast<std::size_t>(cfg.in_channels),
      static_cast<std::size_t>(cfg.patch_size),
      static_cast<std::size_t>(cfg.patch_size)};
  shapes["vision.patch_embed.bias"] = {vd};
  shapes["vision.cls_token"] = {1, vd};
  shapes["vision.pos_embed"] = {static_cast<std::size_t>(cfg.vision_tokens()), vd};
  add_block_shapes(shapes, "vision", cfg.vision_depth, cfg.vision_dim,
                   cfg.vision_mlp_dim());
  shapes["vision.ln_final.gamma"] = {vd};
  shapes["vision.ln_final.beta"] = {vd};
  shapes["vision.proj"] = {vd, static_cast<std::size_t>(cfg.proj_dim)};
  shapes["text.token_embedding"] = {static_cast<std::size_t>(cfg.vocab_size), td};
  shapes["text.pos_embed"] = {static_cast<std::size_t>(cfg.context_length), td};
  add_block_shapes(shapes, "text", cfg.text_depth, cfg.text_dim,
                   cfg.text_mlp_dim());
  shapes["text.ln_final.gamma"] = {td};
  shapes["text.ln_final.beta"] = {td};
  shapes["text.proj"] = {td, static_cast<std::size_t>(cfg.proj_dim)};
  shapes["log_temperature"] = {1};
  return shapes;
}

bool is_norm_gain(const std::string& name) {
  return ends_with(name, ".gamma");
}

bool is_zero_init(const std::string& name) {
  return ends_with(name, ".bias") || ends_with(name, ".beta");
}

}  // namespace

ModelParameters init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParameters params;
  params.config = config;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    nn::Tensor t = nn::Tensor::zeros(shape);
    if (name == "log_temperature") {
      t.v[0] = std::log(1.0 / 0.07);
    } else if (is_norm_gain(name)) {
      std::fill(t.v.begin(), t.v.end(), 1.0);
    } else if (!is_zero_init(name)) {
      Rng rng(stream_key(seed, name));
      for (double& x : t.v) x = rng.truncated_normal(0.02);
    }
    params.tensors[name] = std::move(t);
  }
  return params;
}

ModelParameters extend_patch_embed(const ModelParameters& params,
                                   const std::vector<BandId>& new_bands,
                                   const std::array<std::size_t, 3>& rgb_positions,
                                   InitMode mode) {
  if (params.config.in_channels != 3) {
    throw ShapeMismatchError("patch embedding extension requires a 3-channel model");
  }
  const std::size_t c_new = new_bands.size();
  if (c_new < 3) throw InvalidConfigError("extension needs at least 3 bands");
  std::set<std::size_t> seen;
  for (std::size_t p : rgb_positions) {
    if (p >= c_new || !seen.insert(p).second) {
      throw InvalidPositionsError("rgb destination slots must be distinct and in range");
    }
  }

  ModelParameters out = params;
  out.config.in_channels = static_cast<int>(c_new);
  const auto& w_old = params.tensors.at("vision.patch_embed.weight");
  const std::size_t d = w_old.shape[0];
  const std::size_t ps = w_old.shape[2];
  const std::size_t slice = ps * ps;
  nn::Tensor w_new = nn::Tensor::zeros({d, c_new, ps, ps});
  for (std::size_t row = 0; row < d; ++row) {
    const double* src = w_old.v.data() + row * 3 * slice;
    double* dst = w_new.v.data() + row * c_new * slice;
    for (std::size_t i = 0; i < 3; ++i) {
      std::copy(src + i * slice, src + (i + 1) * slice,
                dst + rgb_positions[i] * slice);
    }
    if (mode == InitMode::MeanRgbInit) {
      for (std::size_t ch = 0; ch < c_new; ++ch) {
        if (ch == rgb_positions[0] || ch == rgb_positions[1] ||
            ch == rgb_positions[2]) {
          continue;
        }
        for (std::size_t k = 0; k < slice; ++k) {
          dst[ch * slice + k] =
              (src[k] + src[slice + k] + src[2 * slice + k]) / 3.0;
        }
      }
    }
  }
  out.tensors["vision.patch_embed.weight"] = std::move(w_new);
  return out;
}

std::map<std::string, bool> resolve_freeze(const ModelParameters& params,
                                           const FreezePolicy& policy) {
  std::map<std::string, bool> out;
  for (const auto& [name, tensor] : params.tensors) {
    (void)tensor;
    bool trainable = false;
    switch (policy.kind) {
      case FreezePolicy::Kind::AllTrainable:
        trainable = true;
        break;
      case FreezePolicy::Kind::ProjectionOnly:
        trainable = name == "vision.proj" || name == "text.proj" ||
                    name == "log_temperature";
        break;
      case FreezePolicy::Kind::AttentionOnly:
        trainable = name.find(".attn.") != std::string::npos &&
                    ends_with(name, ".weight");
        break;
      case FreezePolicy::Kind::ImageAllTextFrozen:
        trainable = name.rfind("vision.", 0) == 0 || name == "log_temperature";
        break;
      case FreezePolicy::Kind::Custom:
        for (const auto& pat : policy.patterns) {
          if (!pat.empty() && name.find(pat) != std::string::npos) {
            trainable = true;
            break;
          }
        }
        break;
    }
    if (policy.patch_embed_always_trainable &&
        name.rfind("vision.patch_embed", 0) == 0) {
      trainable = true;
    }
    out[name] = trainable;
  }
  return out;
}

FreezePolicy freeze_policy_from_string(const std::string& text) {
  FreezePolicy p;
  std::string body = text;
  const std::string pe_suffix = "+patch_embed";
  if (body.size() >= pe_suffix.size() &&
      body.compare(body.size() - pe_suffix.size(), pe_suffix.size(),
                   pe_suffix) == 0) {
    p.patch_embed_always_trainable = true;
    body = body.substr(0, body.size() - pe_suffix.size());
  }
  if (body == "all" || body.empty()) {
    p.kind = FreezePolicy::Kind::AllTrainable;
  } else if (body == "projection") {
    p.kind = FreezePolicy::Kind::ProjectionOnly;
  } else if (body == "attention") {
    p.kind = FreezePolicy::Kind::AttentionOnly;
  } else if (body == "image-all-text-frozen") {
    p.kind = FreezePolicy::Kind::ImageAllTextFrozen;
  } else if (body.rfind("custom:", 0) == 0) {
    p.kind = FreezePolicy::Kind::Custom;
    std::string rest = body.substr(7);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      std::size_t comma = rest.find(',', pos);
      if (comma == std::string::npos) comma = rest.size();
      std::string pat = rest.substr(pos, comma - pos);
      if (!pat.empty()) p.patterns.push_back(pat);
      pos = comma + 1;
    }
    if (p.patterns.empty()) {
      throw InvalidConfigError("custom freeze policy needs at least one pattern");
    }
  } else {
    throw InvalidConfigError("unknown freeze policy: " + text);
  }
  return p;
}

std::string freeze_policy_to_string(const FreezePolicy& policy) {
  std::string body;
  switch (policy.kind) {
    case FreezePolicy::Kind::AllTrainable: body = "all"; break;
    case FreezePolicy::Kind::ProjectionOnly: body = "projection"; break;
    case FreezePolicy::Kind::AttentionOnly: body = "attention"; break;
    case FreezePolicy::Kind::ImageAllTextFrozen:
      body = "image-all-text-frozen";
      break;
    case FreezePolicy::Kind::Custom: {
      body = "custom:";
      for (std::size_t i = 0; i < policy.patterns.size(); ++i) {
        if (i) body += ',';
        body += policy.patterns[i];
      }
      break;
    }
  }
  if (policy.patch_embed_always_trainable) body += "+patch_embed";
  return body;
}

nn::TensorT<float> encode_image(const ModelParameters& params,
                                const ImageBatch& batch) {
  nn::GraphT<float> g(/*recording=*/false);
  ParamVars<float> pv = make_param_vars(g, params);
  nn::Var out = image_tower(g, pv, params.config, batch);
  return g.value(out);
}

nn::TensorT<float> encode_text(const ModelParameters& params,
                               const std::vector<std::vector<int>>& tokens) {
  nn::GraphT<float> g(/*recording=*/false);
  ParamVars<float> pv = make_param_vars(g, params);
  nn::Var out = text_tower(g, pv, params.config, tokens);
  return g.value(out);
}

}  // namespace msclip
