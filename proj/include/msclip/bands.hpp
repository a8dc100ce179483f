#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace msclip {

// Sentinel-2 L2A band identifiers. B10 is kept for the 12-band layout even
// though L2A products omit it; synthetic data can populate it.
enum class BandId : std::uint8_t {
  B1,
  B2,
  B3,
  B4,
  B5,
  B6,
  B7,
  B8,
  B8A,
  B9,
  B10,
  B11,
  B12,
};

std::string_view band_name(BandId id);
BandId band_from_name(std::string_view name);  // throws InvalidConfigError

// Nominal ground sampling distance in meters (10/20/60).
int band_resolution_m(BandId id);

// Default multispectral working set: the 20 m and 10 m bands, skipping the
// 60 m atmospheric bands (B1, B9, B10).
const std::vector<BandId>& ten_band_default();

// Ten-band set plus B1 and B10, in canonical order.
const std::vector<BandId>& twelve_band_default();

// Natural-color order (red, green, blue).
const std::vector<BandId>& rgb_bands();

std::vector<BandId> bands_from_names(const std::vector<std::string>& names);
std::vector<std::string> band_names(const std::vector<BandId>& bands);

}  // namespace msclip
