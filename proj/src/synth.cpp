#include "msclip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "msclip/errors.hpp"
#include "msclip/rng.hpp"

namespace msclip {

namespace {

constexpr double kGridBase = 400.0;
constexpr double kGridStep = 250.0;
constexpr double kTwoPi = 6.283185307179586476925;

bool is_rgb_band(BandId b) {
  return b == BandId::B2 || b == BandId::B3 || b == BandId::B4;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(key);
  rng.shuffle(p);
  return p;
}

const std::vector<std::string>& name_pool() {
  static const std::vector<std::string> pool = {
      "residential area", "industrial site", "dense forest",
      "shallow lake",     "cropland",        "coastal wetland",
      "gravel quarry",    "vineyard",        "dry grassland",
      "sandy beach",      "river delta",     "airport tarmac",
      "solar farm",       "fruit orchard",   "bare rock",
      "salt flat"};
  return pool;
}

const std::vector<std::string>& season_pool() {
  static const std::vector<std::string> pool = {"spring", "summer", "autumn",
                                                "winter"};
  return pool;
}

const std::vector<std::string>& texture_word_pool() {
  static const std::vector<std::string> pool = {"smooth", "coarse", "mottled",
                                                "uniform", "patchy"};
  return pool;
}

const std::vector<std::string>& suffix_pool() {
  static const std::vector<std::string> pool = {
      "",
      " near a road",
      " under clear skies",
      " at the edge of the tile",
      " spanning the full scene",
      " beside a small settlement"};
  return pool;
}

std::string fill_template(const std::string& tpl, const std::string& name) {
  const auto pos = tpl.find("{}");
  if (pos == std::string::npos) return tpl + " " + name;
  std::string out = tpl;
  out.replace(pos, 2, name);
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) {
    throw InvalidConfigError("num_classes must be at least 2");
  }
  if (image_size < 4) {
    throw InvalidConfigError("image_size must be at least 4");
  }
  if (band_set.empty()) {
    throw InvalidConfigError("band_set is empty");
  }
  std::set<BandId> bs(band_set.begin(), band_set.end());
  if (bs.size() != band_set.size()) {
    throw InvalidConfigError("band_set has duplicates");
  }
  for (BandId b : {BandId::B2, BandId::B3, BandId::B4}) {
    if (!bs.count(b)) {
      throw InvalidConfigError("band_set must include B2, B3 and B4");
    }
  }
  for (int c : spectral_only_classes) {
    if (c < 0 || c >= num_classes) {
      throw InvalidConfigError("spectral_only_classes index out of range");
    }
  }
  if (!spectral_only_classes.empty() &&
      !std::any_of(band_set.begin(), band_set.end(),
                   [](BandId b) { return !is_rgb_band(b); })) {
    throw InvalidConfigError(
        "spectral_only_classes need at least one band beyond B2/B3/B4");
  }
  if (noise_std < 0.0) {
    throw InvalidConfigError("noise_std must be non-negative");
  }
  for (const auto& [split, count] : per_class_count) {
    (void)split;
    if (count < 0) throw InvalidConfigError("per_class_count must be >= 0");
  }
  if (!class_names.empty() &&
      class_names.size() < static_cast<std::size_t>(num_classes)) {
    throw InvalidConfigError("class_names shorter than num_classes");
  }
}

std::vector<std::string> default_class_names(int num_classes) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(num_classes));
  const auto& pool = name_pool();
  for (int k = 0; k < num_classes; ++k) {
    if (static_cast<std::size_t>(k) < pool.size()) {
      names.push_back(pool[static_cast<std::size_t>(k)]);
    } else {
      names.push_back("land cover type " + std::to_string(k));
    }
  }
  return names;
}

const std::vector<std::string>& default_caption_templates() {
  static const std::vector<std::string> v = {
      "a satellite photo of {}",
      "a satellite image of {}",
      "an aerial view of {}",
      "an overhead photo of {}",
      "a remote sensing image of {}",
      "a top-down satellite view of {}"};
  return v;
}

std::vector<std::string> synth_class_names(const SynthConfig& cfg) {
  if (!cfg.class_names.empty()) {
    return {cfg.class_names.begin(),
            cfg.class_names.begin() + cfg.num_classes};
  }
  return default_class_names(cfg.num_classes);
}

std::vector<std::map<BandId, double>> synth_signatures(const SynthConfig& cfg) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.num_classes);
  std::vector<std::map<BandId, double>> sig(k);

  std::set<int> spectral(cfg.spectral_only_classes.begin(),
                         cfg.spectral_only_classes.end());
  std::vector<int> plain;  // classes with their own natural-color identity
  for (int c = 0; c < cfg.num_classes; ++c) {
    if (!spectral.count(c)) plain.push_back(c);
  }

  for (BandId b : cfg.band_set) {
    const std::uint64_t key =
        stream_key(cfg.seed, "signature", static_cast<std::uint64_t>(b));
    if (is_rgb_band(b) && !spectral.empty()) {
      // One shared grid slot for the whole spectral-only group.
      const std::size_t slots = plain.size() + 1;
      const auto perm = seeded_permutation(slots, key);
      for (std::size_t j = 0; j < plain.size(); ++j) {
        sig[static_cast<std::size_t>(plain[j])][b] =
            kGridBase + kGridStep * static_cast<double>(perm[j]);
      }
      const double shared =
          kGridBase + kGridStep * static_cast<double>(perm[plain.size()]);
      for (int c : spectral) sig[static_cast<std::size_t>(c)][b] = shared;
    } else {
      // Injective slot assignment: any two classes differ by >= kGridStep.
      const auto perm = seeded_permutation(k, key);
      for (std::size_t c = 0; c < k; ++c) {
        sig[c][b] = kGridBase + kGridStep * static_cast<double>(perm[c]);
      }
    }
  }
  return sig;
}

std::vector<SceneRecord> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto signatures = synth_signatures(cfg);
  const auto names = synth_class_names(cfg);
  const auto& templates = cfg.caption_templates.empty()
                              ? default_caption_templates()
                              : cfg.caption_templates;
  const auto size = static_cast<std::size_t>(cfg.image_size);
  const std::size_t plane = size * size;
  const double amp = cfg.texture_amplitude_factor * cfg.noise_std;

  std::vector<SceneRecord> records;
  const Split splits[3] = {Split::Train, Split::Val, Split::Test};
  for (Split split : splits) {
    const auto it = cfg.per_class_count.find(split);
    const int count = it == cfg.per_class_count.end() ? 0 : it->second;
    for (int c = 0; c < cfg.num_classes; ++c) {
      for (int idx = 0; idx < count; ++idx) {
        SceneRecord rec;
        char idbuf[64];
        std::snprintf(idbuf, sizeof(idbuf), "%s-c%02d-%04d",
                      std::string(split_name(split)).c_str(), c, idx);
        rec.id = idbuf;
        rec.split = split;
        rec.class_labels = {names[static_cast<std::size_t>(c)]};

        rec.image.bands = cfg.band_set;
        rec.image.height = size;
        rec.image.width = size;
        rec.image.values.resize(cfg.band_set.size() * plane);
        for (std::size_t b = 0; b < cfg.band_set.size(); ++b) {
          const BandId band = cfg.band_set[b];
          const double base =
              signatures[static_cast<std::size_t>(c)].at(band);
          // Keyed by within-class index so classes sharing a signature on
          // this band produce identical planes for matching indices.
          Rng rng(stream_key(cfg.seed, "field",
                             static_cast<std::uint64_t>(split),
                             static_cast<std::uint64_t>(idx),
                             static_cast<std::uint64_t>(band)));
          // Three low-frequency cosine components.
          double fy[3], fx[3], ph[3];
          for (int m = 0; m < 3; ++m) {
            fy[m] = rng.uniform(0.5, 2.5);
            fx[m] = rng.uniform(0.5, 2.5);
            ph[m] = rng.uniform(0.0, kTwoPi);
          }
          auto dst = rec.image.plane(b);
          const double inv = 1.0 / static_cast<double>(size);
          for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
              double tex = 0.0;
              for (int m = 0; m < 3; ++m) {
                tex += std::cos(kTwoPi * (fy[m] * static_cast<double>(y) +
                                          fx[m] * static_cast<double>(x)) *
                                    inv +
                                ph[m]);
              }
              const double v = base + cfg.noise_std * rng.normal() +
                               amp / 3.0 * tex;
              dst[y * size + x] = static_cast<float>(std::max(v, 0.0));
            }
          }
        }

        // Captions vary lexically but always carry the class name.
        Rng crng(stream_key(cfg.seed, "caption",
                            static_cast<std::uint64_t>(split),
                            static_cast<std::uint64_t>(c),
                            static_cast<std::uint64_t>(idx)));
        std::string caption = fill_template(
            templates[crng.bounded(templates.size())],
            names[static_cast<std::size_t>(c)]);
        if (crng.uniform() < 0.5) {
          caption += suffix_pool()[crng.bounded(suffix_pool().size())];
        } else if (crng.uniform() < 0.5) {
          caption += " with " +
                     texture_word_pool()[crng.bounded(
                         texture_word_pool().size())] +
                     " texture";
        } else {
          caption += " captured in " +
                     season_pool()[crng.bounded(season_pool().size())];
        }
        rec.caption = caption;

        Rng qrng(stream_key(cfg.seed, "qa", static_cast<std::uint64_t>(split),
                            static_cast<std::uint64_t>(c),
                            static_cast<std::uint64_t>(idx)));
        const std::vector<std::pair<std::string, std::string>> qa_pool = {
            {"what is the dominant land cover?",
             names[static_cast<std::size_t>(c)]},
            {"how many distinct regions are visible?",
             std::to_string(1 + qrng.bounded(4))},
            {"is the scene captured from above?", "yes"},
            {"where is the brightest region?",
             std::vector<std::string>{"north", "south", "east", "west",
                                      "center"}[qrng.bounded(5)]},
            {"does the scene contain " + names[static_cast<std::size_t>(c)] +
                 "?",
             "yes"},
            {"which band responds most strongly?",
             std::string(band_name(
                 cfg.band_set[qrng.bounded(cfg.band_set.size())]))}};
        const int qa_count = std::min<int>(cfg.qa_pairs_per_scene,
                                           static_cast<int>(qa_pool.size()));
        std::vector<std::size_t> order(qa_pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        qrng.shuffle(order);
        for (int q = 0; q < qa_count; ++q) {
          rec.qa_pairs.push_back(qa_pool[order[static_cast<std::size_t>(q)]]);
        }

        records.push_back(std::move(rec));
      }
    }
  }
  if (records.empty()) throw EmptyDatasetError();
  return records;
}

}  // namespace msclip
