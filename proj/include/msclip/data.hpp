#pragma once

#include <cstdint>
#include <vector>

#include "msclip/image.hpp"

namespace msclip {

// Subset/reorder bands. Every requested band must be present.
MultispectralImage select_bands(const MultispectralImage& img,
                                const std::vector<BandId>& subset);

// 8-bit natural-color composite, channel order (B4, B3, B2).
// Reflectance is clamped to [0, 2000] then mapped linearly to [0, 255]
// with round-half-up.
struct RgbU8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;  // 3 planes, R then G then B
};
RgbU8 to_rgb_uint8(const MultispectralImage& img);

// Bicubic resampling (cubic convolution, a = -0.5), edge-clamped,
// pixel-center alignment: src = (i + 0.5) * in / out - 0.5.
MultispectralImage resize_bicubic(const MultispectralImage& img,
                                  std::size_t out_h, std::size_t out_w);

// (v - mean) / stddev per band; stats must cover every band of img.
MultispectralImage normalize(const MultispectralImage& img,
                             const NormalizationStats& stats);

// Multiply every sample by k (reflectance scaling ahead of normalize()).
MultispectralImage scale_values(const MultispectralImage& img, double k);

// Per-band mean and population standard deviation over every pixel of
// every image. Stddev is floored at 1e-6 so normalize() stays finite on
// constant bands. All images must share one band list.
NormalizationStats compute_stats(const std::vector<MultispectralImage>& imgs);

}  // namespace msclip
