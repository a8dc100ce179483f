#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "msclip/image.hpp"

namespace msclip {

// Seeded synthetic scene generator. Each class has a per-band spectral
// signature; classes listed in spectral_only_classes share one signature on
// the natural-color bands (B2, B3, B4) and stay separable only through the
// remaining bands. Pixel value = signature + Gaussian noise + low-frequency
// cosine texture, clamped at zero. Noise and texture fields are keyed by the
// scene's within-class index, not by class, so two confusable classes emit
// pixel-identical natural-color planes for matching indices.
struct SynthConfig {
  std::uint64_t seed = 0;
  int num_classes = 2;
  std::map<Split, int> per_class_count = {
      {Split::Train, 32}, {Split::Val, 8}, {Split::Test, 8}};
  int image_size = 64;
  std::vector<BandId> band_set;  // must include B2, B3, B4
  std::vector<int> spectral_only_classes;
  double noise_std = 25.0;
  // Texture amplitude scales with noise so noise_std = 0 yields exact
  // signature planes.
  double texture_amplitude_factor = 2.0;
  int qa_pairs_per_scene = 2;
  std::vector<std::string> class_names;         // defaults supplied
  std::vector<std::string> caption_templates;   // "{}" is the class name slot

  void validate() const;  // throws InvalidConfigError
};

std::vector<std::string> default_class_names(int num_classes);
const std::vector<std::string>& default_caption_templates();

// Resolved class names for a config (config override or defaults).
std::vector<std::string> synth_class_names(const SynthConfig& cfg);

// Per-class per-band signature values. Values sit on a 250-step grid from
// 400 so distinct classes are separated by at least 250 on every band that
// is supposed to distinguish them.
std::vector<std::map<BandId, double>> synth_signatures(const SynthConfig& cfg);

// Deterministic: equal configs produce identical records, captions included.
// Record order is split-major (train, val, test), then class, then index.
std::vector<SceneRecord> generate_synthetic(const SynthConfig& cfg);

}  // namespace msclip
