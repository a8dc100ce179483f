#include "msclip/msr1.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "msclip/errors.hpp"

namespace msclip {

namespace {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated raster file: " + path.string());
  return v;
}

}  // namespace

void write_msr1(const std::filesystem::path& path, const Msr1File& file) {
  if (file.band_names.size() > 255) {
    throw InvalidConfigError("raster with more than 255 bands");
  }
  const std::size_t planes =
      file.band_names.empty() ? 1 : file.band_names.size();
  if (file.values.size() != planes * static_cast<std::size_t>(file.height) *
                                static_cast<std::size_t>(file.width)) {
    throw ShapeMismatchError("raster payload size mismatch on write");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os.write("MSR1", 4);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(file.band_names.size()));
  for (const auto& name : file.band_names) {
    if (name.empty() || name.size() > 255) {
      throw InvalidConfigError("band name length out of range");
    }
    put<std::uint8_t>(os, static_cast<std::uint8_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  put<std::uint32_t>(os, file.height);
  put<std::uint32_t>(os, file.width);
  os.write(reinterpret_cast<const char*>(file.values.data()),
           static_cast<std::streamsize>(file.values.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path.string());
}

Msr1File read_msr1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open raster: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MSR1", 4) != 0) {
    throw IoError("bad raster magic: " + path.string());
  }
  Msr1File file;
  const auto band_count = get<std::uint8_t>(is, path);
  file.band_names.resize(band_count);
  for (auto& name : file.band_names) {
    const auto len = get<std::uint8_t>(is, path);
    name.resize(len);
    is.read(name.data(), len);
    if (!is) throw IoError("truncated raster file: " + path.string());
  }
  file.height = get<std::uint32_t>(is, path);
  file.width = get<std::uint32_t>(is, path);
  const std::size_t planes = band_count == 0 ? 1 : band_count;
  const std::size_t n = planes * static_cast<std::size_t>(file.height) *
                        static_cast<std::size_t>(file.width);
  file.values.resize(n);
  is.read(reinterpret_cast<char*>(file.values.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw IoError("truncated raster payload: " + path.string());
  return file;
}

void write_image_msr1(const std::filesystem::path& path,
                      const MultispectralImage& img) {
  img.validate();
  Msr1File file;
  file.band_names = band_names(img.bands);
  file.height = static_cast<std::uint32_t>(img.height);
  file.width = static_cast<std::uint32_t>(img.width);
  file.values = img.values;
  write_msr1(path, file);
}

MultispectralImage read_image_msr1(const std::filesystem::path& path) {
  const Msr1File file = read_msr1(path);
  if (file.band_names.empty()) {
    throw IoError("raster without band names: " + path.string());
  }
  MultispectralImage img;
  try {
    img.bands = bands_from_names(file.band_names);
  } catch (const InvalidConfigError& e) {
    throw IoError(std::string(e.what()) + " in " + path.string());
  }
  img.height = file.height;
  img.width = file.width;
  img.values = file.values;
  img.validate();
  return img;
}

}  // namespace msclip
