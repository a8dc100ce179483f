#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "msclip/bands.hpp"
#include "msclip/nn/graph.hpp"

namespace msclip {

// Desk-scale dual-encoder dimensions. Defaults are small enough for CPU
// training yet deep enough to profit from the extra spectral channels.
struct ModelConfig {
  int image_size = 64;
  int patch_size = 16;
  int in_channels = 3;
  int vision_dim = 128;
  int vision_depth = 4;
  int vision_heads = 4;
  int text_dim = 128;
  int text_depth = 2;
  int text_heads = 4;
  int vocab_size = 512;
  int context_length = 77;
  int proj_dim = 64;
  double mlp_ratio = 4.0;

  void validate() const;  // throws InvalidConfigError
  int patch_grid() const { return image_size / patch_size; }
  int vision_tokens() const { return patch_grid() * patch_grid() + 1; }
  int vision_mlp_dim() const;
  int text_mlp_dim() const;
};

// Named dense tensors; the map keeps a stable lexicographic order for
// serialization and seeding. Values are double master copies; compute
// graphs cast on entry.
struct ModelParameters {
  ModelConfig config;
  std::map<std::string, nn::Tensor> tensors;

  double log_temperature() const {
    return tensors.at("log_temperature").v[0];
  }
  void set_log_temperature(double v) {
    tensors.at("log_temperature").v[0] = v;
  }
  // Temperature stays bounded: exp(log_temperature) <= 100.
  void clamp_log_temperature();
};

// Truncated-normal weights (std 0.02, +-2 sigma), zero biases, unit norm
// gains, log_temperature = ln(1/0.07). Each tensor draws from its own
// name-keyed stream, so layouts are reproducible tensor by tensor.
ModelParameters init_model(const ModelConfig& config, std::uint64_t seed);

enum class InitMode { ZeroInit, MeanRgbInit };

// Widens the patch embedding of a 3-channel model to new_bands.size()
// channels. rgb_positions[i] is the destination of original channel i;
// remaining channel slices are zeros (ZeroInit) or the elementwise mean of
// the three original slices (MeanRgbInit). With ZeroInit the extended model
// reproduces the source model's embeddings on any input whose rgb_positions
// channels equal the original three.
ModelParameters extend_patch_embed(const ModelParameters& params,
                                   const std::vector<BandId>& new_bands,
                                   const std::array<std::size_t, 3>& rgb_positions,
                                   InitMode mode);

struct FreezePolicy {
  enum class Kind {
    AllTrainable,
    ProjectionOnly,
    AttentionOnly,
    ImageAllTextFrozen,
    Custom,
  };
  Kind kind = Kind::AllTrainable;
  std::vector<std::string> patterns;  // Custom: substring matches
  bool patch_embed_always_trainable = false;
};

// name -> trainable flag over every parameter tensor.
std::map<std::string, bool> resolve_freeze(const ModelParameters& params,
                                           const FreezePolicy& policy);

FreezePolicy freeze_policy_from_string(const std::string& text);
std::string freeze_policy_to_string(const FreezePolicy& policy);

// n images, channel-major planes per image.
struct ImageBatch {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  std::size_t image_stride() const { return c * h * w; }
};

namespace detail {

// Patch extraction: row-major patch grid, (channel, py, px) layout per
// patch, matching the patch-embedding weight layout
// [dim, channels, patch, patch].
template <class S>
nn::TensorT<S> im2col(const ImageBatch& batch, int patch) {
  const std::size_t p = static_cast<std::size_t>(patch);
  const std::size_t gy = batch.h / p;
  const std::size_t gx = batch.w / p;
  const std::size_t cols = batch.c * p * p;
  nn::TensorT<S> out = nn::TensorT<S>::zeros({batch.n * gy * gx, cols});
  for (std::size_t s = 0; s < batch.n; ++s) {
    const double* img = batch.v.data() + s * batch.image_stride();
    for (std::size_t py = 0; py < gy; ++py) {
      for (std::size_t px = 0; px < gx; ++px) {
        S* dst = out.v.data() + ((s * gy + py) * gx + px) * cols;
        for (std::size_t ch = 0; ch < batch.c; ++ch) {
          const double* plane = img + ch * batch.h * batch.w;
          for (std::size_t y = 0; y < p; ++y) {
            for (std::size_t x = 0; x < p; ++x) {
              *dst++ = static_cast<S>(
                  plane[(py * p + y) * batch.w + px * p + x]);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace detail

// Graph-level parameter handles; shared by training and inference paths.
template <class S>
struct ParamVars {
  std::map<std::string, nn::Var> vars;
  const nn::Var& at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw InvalidConfigError("unknown parameter: " + name);
    }
    return it->second;
  }
};

template <class S>
ParamVars<S> make_param_vars(nn::GraphT<S>& g, const ModelParameters& params) {
  ParamVars<S> out;
  for (const auto& [name, tensor] : params.tensors) {
    out.vars[name] = g.template leaf_cast<double>(tensor, true);
  }
  return out;
}

template <class S>
nn::Var transformer_blocks(nn::GraphT<S>& g, const ParamVars<S>& pv,
                           const std::string& prefix, nn::Var x,
                           std::size_t n_samples, int depth, int heads,
                           bool causal) {
  for (int layer = 0; layer < depth; ++layer) {
    const std::string base = prefix + ".blocks." + std::to_string(layer);
    nn::Var h = g.layer_norm(x, pv.at(base + ".ln1.gamma"),
                             pv.at(base + ".ln1.beta"));
    nn::Var q = g.add_row_bias(g.matmul(h, pv.at(base + ".attn.q.weight")),
                               pv.at(base + ".attn.q.bias"));
    nn::Var k = g.add_row_bias(g.matmul(h, pv.at(base + ".attn.k.weight")),
                               pv.at(base + ".attn.k.bias"));
    nn::Var v = g.add_row_bias(g.matmul(h, pv.at(base + ".attn.v.weight")),
                               pv.at(base + ".attn.v.bias"));
    nn::Var a = g.attention(q, k, v, n_samples,
                            static_cast<std::size_t>(heads), causal);
    nn::Var o = g.add_row_bias(g.matmul(a, pv.at(base + ".attn.out.weight")),
                               pv.at(base + ".attn.out.bias"));
    x = g.add(x, o);
    nn::Var h2 = g.layer_norm(x, pv.at(base + ".ln2.gamma"),
                              pv.at(base + ".ln2.beta"));
    nn::Var m1 = g.add_row_bias(g.matmul(h2, pv.at(base + ".mlp.fc1.weight")),
                                pv.at(base + ".mlp.fc1.bias"));
    nn::Var m2 = g.add_row_bias(
        g.matmul(g.gelu(m1), pv.at(base + ".mlp.fc2.weight")),
        pv.at(base + ".mlp.fc2.bias"));
    x = g.add(x, m2);
  }
  return x;
}

// Patchify -> linear embed -> class token -> positions -> blocks -> final
// norm on the class token -> projection -> unit rows.
template <class S>
nn::Var image_tower(nn::GraphT<S>& g, const ParamVars<S>& pv,
                    const ModelConfig& cfg, const ImageBatch& batch) {
  if (batch.c != static_cast<std::size_t>(cfg.in_channels) ||
      batch.h != static_cast<std::size_t>(cfg.image_size) ||
      batch.w != static_cast<std::size_t>(cfg.image_size) || batch.n == 0) {
    throw ShapeMismatchError("image batch extents vs model config");
  }
  for (double x : batch.v) {
    if (!std::isfinite(x)) throw NonFiniteInputError("image batch");
  }
  nn::Var cols = g.constant(detail::im2col<S>(batch, cfg.patch_size));
  nn::Var tokens = g.add_row_bias(
      g.matmul(cols, pv.at("vision.patch_embed.weight"), false, true),
      pv.at("vision.patch_embed.bias"));
  nn::Var x = g.prepend_row_per_sample(pv.at("vision.cls_token"), tokens,
                                       batch.n);
  x = g.add_broadcast_block(x, pv.at("vision.pos_embed"), batch.n);
  x = transformer_blocks(g, pv, "vision", x, batch.n, cfg.vision_depth,
                         cfg.vision_heads, /*causal=*/false);

  auto cls_rows = std::make_shared<std::vector<std::size_t>>();
  const std::size_t t = static_cast<std::size_t>(cfg.vision_tokens());
  for (std::size_t s = 0; s < batch.n; ++s) cls_rows->push_back(s * t);
  nn::Var cls = g.gather_rows(x, cls_rows);
  cls = g.layer_norm(cls, pv.at("vision.ln_final.gamma"),
                     pv.at("vision.ln_final.beta"));
  return g.l2_normalize_rows(g.matmul(cls, pv.at("vision.proj")));
}

// Token and position embeddings -> causal blocks -> EOS pooling through the
// final norm -> projection -> unit rows. Positions after the first EOS do
// not influence the output.
template <class S>
nn::Var text_tower(nn::GraphT<S>& g, const ParamVars<S>& pv,
                   const ModelConfig& cfg,
                   const std::vector<std::vector<int>>& tokens) {
  if (tokens.empty()) throw ShapeMismatchError("empty token batch");
  const std::size_t ctx = static_cast<std::size_t>(cfg.context_length);
  auto flat = std::make_shared<std::vector<int>>();
  auto eos_rows = std::make_shared<std::vector<std::size_t>>();
  flat->reserve(tokens.size() * ctx);
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    const auto& row = tokens[r];
    if (row.size() != ctx) {
      throw ShapeMismatchError("token row length " +
                               std::to_string(row.size()) + " vs context " +
                               std::to_string(ctx));
    }
    if (row[0] != 1) {
      throw InvalidConfigError("token rows must start with BOS");
    }
    int eos = -1;
    for (std::size_t i = 0; i < ctx; ++i) {
      if (row[i] < 0 || row[i] >= cfg.vocab_size) {
        throw TokenOutOfRangeError(std::to_string(row[i]));
      }
      if (eos < 0 && row[i] == 2) eos = static_cast<int>(i);
    }
    if (eos < 0) throw MissingEosError("row " + std::to_string(r));
    eos_rows->push_back(r * ctx + static_cast<std::size_t>(eos));
    flat->insert(flat->end(), row.begin(), row.end());
  }

  nn::Var x = g.embedding_lookup(pv.at("text.token_embedding"), flat);
  x = g.add_broadcast_block(x, pv.at("text.pos_embed"), tokens.size());
  x = transformer_blocks(g, pv, "text", x, tokens.size(), cfg.text_depth,
                         cfg.text_heads, /*causal=*/true);
  nn::Var pooled = g.gather_rows(x, eos_rows);
  pooled = g.layer_norm(pooled, pv.at("text.ln_final.gamma"),
                        pv.at("text.ln_final.beta"));
  return g.l2_normalize_rows(g.matmul(pooled, pv.at("text.proj")));
}

// Inference wrappers; float32 is the embedding interchange precision.
nn::TensorT<float> encode_image(const ModelParameters& params,
                                const ImageBatch& batch);
nn::TensorT<float> encode_text(const ModelParameters& params,
                               const std::vector<std::vector<int>>& tokens);

}  // namespace msclip
