#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vlaudit/error.hpp"
#include "vlaudit/parallel.hpp"

namespace vlaudit {

/// Row-major pixel grid with `Channels` interleaved values per pixel in [0, 1].
template <std::size_t Channels>
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h * Channels, fill) {
    if (w == 0 || h == 0) throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
  }

  double& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * Channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const { return pixels[(y * width + x) * Channels + c]; }
  std::size_t size() const noexcept { return width * height; }
  bool same_shape(const Image& o) const noexcept { return width == o.width && height == o.height; }
};

using GrayImage = Image<1>;
using RgbImage = Image<3>;

/// Binary face region, same geometry as the image it masks.
struct FaceMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> inside;

  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(inside.begin(), inside.end(), [](auto v) { return v != 0; }));
  }
};

/// ITU-R 601 luma: 0.299 R + 0.587 G + 0.114 B.
inline GrayImage to_gray(const RgbImage& rgb) {
  GrayImage g(rgb.width, rgb.height);
  for (std::size_t i = 0; i < rgb.size(); ++i)
    g.pixels[i] = 0.299 * rgb.pixels[3 * i] + 0.587 * rgb.pixels[3 * i + 1] + 0.114 * rgb.pixels[3 * i + 2];
  return g;
}

inline double masked_mean(const GrayImage& img, const FaceMask& mask) {
  if (mask.width != img.width || mask.height != img.height)
    throw Error(ErrorCode::DimensionMismatch, "mask does not match image");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (mask.inside[i]) {
      sum += img.pixels[i];
      ++n;
    }
  if (n == 0) throw Error(ErrorCode::EmptySample, "mask is empty");
  return sum / static_cast<double>(n);
}

struct BrightnessMatch {
  GrayImage image;
  double scale = 1.0;
  std::size_t clipped_pixels = 0;
  double residual = 0.0;  // masked mean of the output minus the reference's
};

/// Scales the variant so its masked mean equals the reference's, clipping
/// to [0, 1]. Clipping is reported through `clipped_pixels` and `residual`.
inline BrightnessMatch brightness_match(const GrayImage& variant, const GrayImage& reference, const FaceMask& mask) {
  if (!variant.same_shape(reference)) throw Error(ErrorCode::DimensionMismatch, "variant and reference differ in size");
  const double ref_mean = masked_mean(reference, mask);
  const double var_mean = masked_mean(variant, mask);
  if (!(ref_mean > 0.0)) throw Error(ErrorCode::DegenerateVariance, "reference face region is black");
  if (!(var_mean > 0.0)) throw Error(ErrorCode::DegenerateVariance, "variant face region is black");
  BrightnessMatch out;
  out.scale = ref_mean / var_mean;
  out.image = GrayImage(variant.width, variant.height);
  for (std::size_t i = 0; i < variant.size(); ++i) {
    const double v = variant.pixels[i] * out.scale;
    if (v > 1.0) ++out.clipped_pixels;
    out.image.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  out.residual = masked_mean(out.image, mask) - ref_mean;
  return out;
}

struct HeatGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;  // row-major, each in [-1, 1]
};

/// Per-pixel mean over pairs of sign(a - b). Signs are accumulated as
/// integers, so swapping every pair negates the grid exactly.
inline HeatGrid sign_heatmap(std::span<const std::pair<GrayImage, GrayImage>> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptySample, "heatmap needs at least one pair");
  const auto w = pairs.front().first.width, h = pairs.front().first.height;
  for (const auto& [a, b] : pairs)
    if (a.width != w || a.height != h || b.width != w || b.height != h)
      throw Error(ErrorCode::DimensionMismatch, "all images must share dimensions");
  std::vector<std::int64_t> counts(w * h, 0);
  parallel_for(h, [&](std::size_t y) {
    for (const auto& [a, b] : pairs)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        counts[i] += (a.pixels[i] > b.pixels[i]) - (a.pixels[i] < b.pixels[i]);
      }
  });
  HeatGrid grid{w, h, std::vector<double>(counts.size())};
  const auto n = static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < counts.size(); ++i) grid.values[i] = static_cast<double>(counts[i]) / n;
  return grid;
}

inline void write_grid_csv(std::ostream& out, const HeatGrid& grid) {
  char buf[32];
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", grid.values[i]);
    out << buf << ((i + 1) % grid.width == 0 ? '\n' : ',');
  }
}

/// Fixed diverging lookup for heat grids: -1 is pure blue, 0 white, +1 pure
/// red, linear in between. Returns 16-bit RGB.
inline std::array<std::uint16_t, 3> diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  auto q = [](double c) { return static_cast<std::uint16_t>(std::lround(std::clamp(c, 0.0, 1.0) * 65535.0)); };
  if (v < 0) return {q(1.0 + v), q(1.0 + v), q(1.0)};
  return {q(1.0), q(1.0 - v), q(1.0 - v)};
}

enum class PoseSide { frontal, negative, positive };

inline PoseSide pose_side(double pose) {
  if (pose < 0) return PoseSide::negative;
  if (pose > 0) return PoseSide::positive;
  return PoseSide::frontal;
}

inline constexpr std::size_t kCausalFaceSize = 512;
inline constexpr std::size_t kCausalFaceCrop = 432;

/// Left edge of the 432-wide crop window for a 512x512 CausalFace image.
inline std::size_t crop_left(PoseSide side) {
  switch (side) {
    case PoseSide::negative: return 0;
    case PoseSide::positive: return 80;
    case PoseSide::frontal: return 40;
  }
  return 40;
}

template <std::size_t C>
Image<C> crop(const Image<C>& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > img.width || y0 + h > img.height) throw Error(ErrorCode::InvalidArgument, "crop window outside image");
  Image<C> out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < C; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

/// 432x432 window: rows [0, 432), columns [40, 472) for frontal images,
/// [0, 432) for negative pose and [80, 512) for positive pose.
template <std::size_t C>
Image<C> crop_causalface(const Image<C>& img, PoseSide side = PoseSide::frontal) {
  if (img.width != kCausalFaceSize || img.height != kCausalFaceSize)
    throw Error(ErrorCode::InvalidArgument, "CausalFace images are 512x512, got " + std::to_string(img.width) + "x" +
                                                std::to_string(img.height));
  return crop(img, crop_left(side), 0, kCausalFaceCrop, kCausalFaceCrop);
}

inline FaceMask crop_causalface(const FaceMask& mask, PoseSide side = PoseSide::frontal) {
  if (mask.width != kCausalFaceSize || mask.height != kCausalFaceSize)
    throw Error(ErrorCode::InvalidArgument, "CausalFace masks are 512x512");
  FaceMask out{kCausalFaceCrop, kCausalFaceCrop, std::vector<std::uint8_t>(kCausalFaceCrop * kCausalFaceCrop)};
  const std::size_t x0 = crop_left(side);
  for (std::size_t y = 0; y < kCausalFaceCrop; ++y)
    for (std::size_t x = 0; x < kCausalFaceCrop; ++x)
      out.inside[y * kCausalFaceCrop + x] = mask.inside[y * mask.width + x0 + x];
  return out;
}

}  // namespace vlaudit
