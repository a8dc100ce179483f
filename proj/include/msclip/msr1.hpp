#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msclip/image.hpp"

namespace msclip {

// "MSR1" container: magic, u8 band count, per band a u8 name length plus
// ASCII name, u32 height, u32 width, then float32 samples band-major.
// All integers and floats are little-endian. A zero band count is legal and
// is used for plain row/column matrices (embedding exports).
struct Msr1File {
  std::vector<std::string> band_names;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;
};

void write_msr1(const std::filesystem::path& path, const Msr1File& file);
Msr1File read_msr1(const std::filesystem::path& path);

void write_image_msr1(const std::filesystem::path& path,
                      const MultispectralImage& img);
MultispectralImage read_image_msr1(const std::filesystem::path& path);

}  // namespace msclip
