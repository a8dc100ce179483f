#include "msclip/bands.hpp"

#include <array>

#include "msclip/errors.hpp"

namespace msclip {

namespace {

struct BandInfo {
  std::string_view name;
  int resolution_m;
};

constexpr std::array<BandInfo, 13> kBands = {{
    {"B1", 60},
    {"B2", 10},
    {"B3", 10},
    {"B4", 10},
    {"B5", 20},
    {"B6", 20},
    {"B7", 20},
    {"B8", 10},
    {"B8A", 20},
    {"B9", 60},
    {"B10", 60},
    {"B11", 20},
    {"B12", 20},
}};

}  // namespace

std::string_view band_name(BandId id) {
  return kBands[static_cast<std::size_t>(id)].name;
}

BandId band_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kBands.size(); ++i) {
    if (kBands[i].name == name) return static_cast<BandId>(i);
  }
  throw InvalidConfigError("unknown band name: " + std::string(name));
}

int band_resolution_m(BandId id) {
  return kBands[static_cast<std::size_t>(id)].resolution_m;
}

const std::vector<BandId>& ten_band_default() {
  static const std::vector<BandId> v = {
      BandId::B2, BandId::B3, BandId::B4,  BandId::B5,  BandId::B6,
      BandId::B7, BandId::B8, BandId::B8A, BandId::B11, BandId::B12};
  return v;
}

const std::vector<BandId>& twelve_band_default() {
  static const std::vector<BandId> v = {
      BandId::B1, BandId::B2, BandId::B3,  BandId::B4,  BandId::B5,
      BandId::B6, BandId::B7, BandId::B8,  BandId::B8A, BandId::B10,
      BandId::B11, BandId::B12};
  return v;
}

const std::vector<BandId>& rgb_bands() {
  static const std::vector<BandId> v = {BandId::B4, BandId::B3, BandId::B2};
  return v;
}

std::vector<BandId> bands_from_names(const std::vector<std::string>& names) {
  std::vector<BandId> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(band_from_name(n));
  return out;
}

std::vector<std::string> band_names(const std::vector<BandId>& bands) {
  std::vector<std::string> out;
  out.reserve(bands.size());
  for (BandId b : bands) out.emplace_back(band_name(b));
  return out;
}

}  // namespace msclip
