#include "msclip/image.hpp"

#include <set>

#include "msclip/errors.hpp"

namespace msclip {

int MultispectralImage::band_index(BandId band) const {
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (bands[i] == band) return static_cast<int>(i);
  }
  return -1;
}

void MultispectralImage::validate() const {
  if (values.size() != bands.size() * plane_size()) {
    throw ShapeMismatchError("raster holds " + std::to_string(values.size()) +
                             " samples for " + std::to_string(bands.size()) +
                             " bands of " + std::to_string(plane_size()) +
                             " pixels");
  }
  std::set<BandId> seen(bands.begin(), bands.end());
  if (seen.size() != bands.size()) {
    throw InconsistentBandsError("duplicate band in raster");
  }
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw InvalidConfigError("unknown split: " + std::string(name));
}

bool NormalizationStats::covers(const std::vector<BandId>& bands) const {
  for (BandId b : bands) {
    if (per_band.find(b) == per_band.end()) return false;
  }
  return true;
}

}  // namespace msclip
