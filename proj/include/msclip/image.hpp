#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msclip/bands.hpp"

namespace msclip {

// Band-major raster. values holds bands.size() planes of height*width
// float32 samples; band order is significant and carried explicitly.
struct MultispectralImage {
  std::vector<BandId> bands;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  std::size_t plane_size() const { return height * width; }

  std::span<const float> plane(std::size_t band_index) const {
    return {values.data() + band_index * plane_size(), plane_size()};
  }
  std::span<float> plane(std::size_t band_index) {
    return {values.data() + band_index * plane_size(), plane_size()};
  }

  // Index of `band` in bands, or -1.
  int band_index(BandId band) const;

  float at(std::size_t band_index, std::size_t y, std::size_t x) const {
    return values[band_index * plane_size() + y * width + x];
  }

  // Throws ShapeMismatchError / InconsistentBandsError on malformed layout.
  void validate() const;
};

enum class Split { Train, Val, Test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);  // throws InvalidConfigError

struct SceneRecord {
  std::string id;
  MultispectralImage image;
  std::string caption;
  std::vector<std::pair<std::string, std::string>> qa_pairs;
  std::vector<std::string> class_labels;
  Split split = Split::Train;
};

struct BandStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct NormalizationStats {
  std::map<BandId, BandStats> per_band;

  bool covers(const std::vector<BandId>& bands) const;
};

}  // namespace msclip
