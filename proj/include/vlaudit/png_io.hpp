#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vlaudit/error.hpp"
#include "vlaudit/imagestats.hpp"

namespace vlaudit {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};

inline std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, std::uint32_t format, std::size_t& w,
                                                std::size_t& h) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw Error(ErrorCode::Io, path.string() + ": " + img.message);
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorCode::Io, path.string() + ": " + msg);
  }
  w = img.width;
  h = img.height;
  return buf;
}

// Classic write API; the simplified one cannot emit 16-bit sRGB samples.
inline void write_png_rows(const std::filesystem::path& path, std::size_t w, std::size_t h, int color_type, int bit_depth,
                           const std::vector<std::uint8_t>& bytes) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = bytes.size() / h;
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Reads any 8-bit PNG (gray, RGB, palette, with or without alpha) as RGB in [0, 1].
inline RgbImage read_png_rgb(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto bytes = detail::read_png_bytes(path, PNG_FORMAT_RGB, w, h);
  RgbImage out(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.pixels[i] = bytes[i] / 255.0;
  return out;
}

inline GrayImage read_png_gray(const std::filesystem::path& path) { return to_gray(read_png_rgb(path)); }

/// Nonzero luma marks the face region.
inline FaceMask read_png_mask(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto rgb = detail::read_png_bytes(path, PNG_FORMAT_RGB, w, h);
  FaceMask mask{w, h, std::vector<std::uint8_t>(w * h)};
  for (std::size_t i = 0; i < w * h; ++i)
    mask.inside[i] = (rgb[3 * i] | rgb[3 * i + 1] | rgb[3 * i + 2]) != 0 ? 1 : 0;
  return mask;
}

inline void write_png_gray(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  detail::write_png_rows(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 8, bytes);
}

inline void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
  std::vector<std::uint8_t> bytes(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  detail::write_png_rows(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, bytes);
}

/// 16-bit RGB rendering of a heat grid through diverging_color.
inline void write_heatmap_png(const std::filesystem::path& path, const HeatGrid& grid) {
  std::vector<std::uint8_t> bytes(grid.values.size() * 6);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    const auto c = diverging_color(grid.values[i]);
    for (std::size_t k = 0; k < 3; ++k) {
      bytes[6 * i + 2 * k] = static_cast<std::uint8_t>(c[k] >> 8);  // PNG samples are big-endian
      bytes[6 * i + 2 * k + 1] = static_cast<std::uint8_t>(c[k] & 0xFF);
    }
  }
  detail::write_png_rows(path, grid.width, grid.height, PNG_COLOR_TYPE_RGB, 16, bytes);
}

}  // namespace vlaudit
