#include "msclip/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msclip/errors.hpp"

namespace msclip {

MultispectralImage select_bands(const MultispectralImage& img,
                                const std::vector<BandId>& subset) {
  img.validate();
  MultispectralImage out;
  out.bands = subset;
  out.height = img.height;
  out.width = img.width;
  out.values.resize(subset.size() * img.plane_size());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const int src = img.band_index(subset[i]);
    if (src < 0) throw MissingBandError(std::string(band_name(subset[i])));
    auto sp = img.plane(static_cast<std::size_t>(src));
    std::copy(sp.begin(), sp.end(), out.plane(i).begin());
  }
  return out;
}

RgbU8 to_rgb_uint8(const MultispectralImage& img) {
  img.validate();
  RgbU8 out;
  out.height = img.height;
  out.width = img.width;
  out.values.resize(3 * img.plane_size());
  const BandId order[3] = {BandId::B4, BandId::B3, BandId::B2};
  for (int c = 0; c < 3; ++c) {
    const int src = img.band_index(order[c]);
    if (src < 0) throw MissingBandError(std::string(band_name(order[c])));
    auto sp = img.plane(static_cast<std::size_t>(src));
    std::uint8_t* dst = out.values.data() + c * img.plane_size();
    for (std::size_t i = 0; i < sp.size(); ++i) {
      double v = std::clamp(static_cast<double>(sp[i]), 0.0, 2000.0);
      // round half up
      dst[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 / 2000.0 + 0.5));
    }
  }
  return out;
}

namespace {

// Cubic convolution kernel, a = -0.5 (Catmull-Rom).
double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

}  // namespace

MultispectralImage resize_bicubic(const MultispectralImage& img,
                                  std::size_t out_h, std::size_t out_w) {
  img.validate();
  if (img.height == 0 || img.width == 0 || out_h == 0 || out_w == 0) {
    throw ShapeMismatchError("resize with empty extent");
  }
  MultispectralImage out;
  out.bands = img.bands;
  out.height = out_h;
  out.width = out_w;
  out.values.resize(img.bands.size() * out_h * out_w);

  const auto in_h = static_cast<std::ptrdiff_t>(img.height);
  const auto in_w = static_cast<std::ptrdiff_t>(img.width);
  auto clamp_y = [in_h](std::ptrdiff_t y) { return std::clamp<std::ptrdiff_t>(y, 0, in_h - 1); };
  auto clamp_x = [in_w](std::ptrdiff_t x) { return std::clamp<std::ptrdiff_t>(x, 0, in_w - 1); };

  // Per-axis taps are precomputed once; the kernel is separable.
  struct Taps {
    std::ptrdiff_t i0;
    double w[4];
  };
  auto make_taps = [](std::size_t out_n, std::size_t in_n) {
    std::vector<Taps> taps(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      const double src = (static_cast<double>(o) + 0.5) *
                             static_cast<double>(in_n) /
                             static_cast<double>(out_n) -
                         0.5;
      const double base = std::floor(src);
      const double f = src - base;
      taps[o].i0 = static_cast<std::ptrdiff_t>(base) - 1;
      for (int m = 0; m < 4; ++m) {
        taps[o].w[m] = cubic_weight(f + 1.0 - static_cast<double>(m));
      }
    }
    return taps;
  };
  const auto ty = make_taps(out_h, img.height);
  const auto tx = make_taps(out_w, img.width);

  for (std::size_t b = 0; b < img.bands.size(); ++b) {
    auto sp = img.plane(b);
    auto dp = out.plane(b);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        for (int m = 0; m < 4; ++m) {
          const std::ptrdiff_t sy = clamp_y(ty[oy].i0 + m);
          double row = 0.0;
          for (int n = 0; n < 4; ++n) {
            const std::ptrdiff_t sx = clamp_x(tx[ox].i0 + n);
            row += tx[ox].w[n] * static_cast<double>(sp[sy * in_w + sx]);
          }
          acc += ty[oy].w[m] * row;
        }
        dp[oy * out_w + ox] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

MultispectralImage normalize(const MultispectralImage& img,
                             const NormalizationStats& stats) {
  img.validate();
  MultispectralImage out = img;
  for (std::size_t b = 0; b < img.bands.size(); ++b) {
    auto it = stats.per_band.find(img.bands[b]);
    if (it == stats.per_band.end()) {
      throw MissingBandError(std::string(band_name(img.bands[b])));
    }
    const double mean = it->second.mean;
    const double inv = 1.0 / it->second.stddev;
    auto dp = out.plane(b);
    for (auto& v : dp) {
      v = static_cast<float>((static_cast<double>(v) - mean) * inv);
    }
  }
  return out;
}

MultispectralImage scale_values(const MultispectralImage& img, double k) {
  MultispectralImage out = img;
  for (auto& v : out.values) v = static_cast<float>(static_cast<double>(v) * k);
  return out;
}

NormalizationStats compute_stats(const std::vector<MultispectralImage>& imgs) {
  if (imgs.empty()) throw EmptyDatasetError();
  const auto& bands = imgs.front().bands;
  for (const auto& img : imgs) {
    img.validate();
    if (img.bands != bands) {
      throw InconsistentBandsError("stats over mixed band lists");
    }
  }
  NormalizationStats stats;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    double sum = 0.0;
    double count = 0.0;
    for (const auto& img : imgs) {
      for (float v : img.plane(b)) sum += static_cast<double>(v);
      count += static_cast<double>(img.plane_size());
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& img : imgs) {
      for (float v : img.plane(b)) {
        const double d = static_cast<double>(v) - mean;
        sq += d * d;
      }
    }
    // Population variance; tiny floor keeps constant bands usable.
    const double stddev = std::max(std::sqrt(sq / count), 1e-6);
    stats.per_band[bands[b]] = BandStats{mean, stddev};
  }
  return stats;
}

}  // namespace msclip
