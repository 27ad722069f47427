// Copyright Contributors to the BevSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "bevsplat/common.hpp"

namespace bevsplat {

namespace detail {

struct PngRead {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngRead() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWrite {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWrite() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

inline void open_gray_png(PngRead& ctx, const std::string& path, int& width, int& height,
                          int& bit_depth) {
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw IoError("cannot open PNG for reading: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError("libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to decode PNG: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);

  width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    throw IoError("expected grayscale PNG: " + path);
  }
  if (bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(ctx.png);
    bit_depth = 8;
  }
}

}  // namespace detail

inline Grid2D<std::uint8_t> read_png_gray8(const std::string& path) {
  detail::PngRead ctx;
  int width = 0, height = 0, bit_depth = 0;
  detail::open_gray_png(ctx, path, width, height, bit_depth);
  if (bit_depth != 8) throw IoError("expected 8-bit grayscale PNG: " + path);
  png_read_update_info(ctx.png, ctx.info);

  Grid2D<std::uint8_t> out(width, height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(&out.data()[static_cast<std::size_t>(y) * width]);
  }
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to decode PNG: " + path);
  png_read_image(ctx.png, rows.data());
  return out;
}

/// Reads 8- or 16-bit grayscale (8-bit values are widened unchanged).
inline Grid2D<std::uint16_t> read_png_gray16(const std::string& path) {
  detail::PngRead ctx;
  int width = 0, height = 0, bit_depth = 0;
  detail::open_gray_png(ctx, path, width, height, bit_depth);

  Grid2D<std::uint16_t> out(width, height);
  if (bit_depth == 16) {
    png_set_swap(ctx.png);  // PNG stores big-endian samples
    png_read_update_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
      rows[y] = reinterpret_cast<png_bytep>(&out.data()[static_cast<std::size_t>(y) * width]);
    }
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to decode PNG: " + path);
    png_read_image(ctx.png, rows.data());
  } else {
    png_read_update_info(ctx.png, ctx.info);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(width) * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
      rows[y] = &buf[static_cast<std::size_t>(y) * width];
    }
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to decode PNG: " + path);
    png_read_image(ctx.png, rows.data());
    for (std::size_t i = 0; i < buf.size(); ++i) out.data()[i] = buf[i];
  }
  return out;
}

inline void write_png_gray8(const std::string& path, const Grid2D<std::uint8_t>& img) {
  detail::PngWrite ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw IoError("cannot open PNG for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError("libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to encode PNG: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(ctx.png, const_cast<png_bytep>(reinterpret_cast<const png_byte*>(
                               &img.data()[static_cast<std::size_t>(y) * img.width()])));
  }
  png_write_end(ctx.png, nullptr);
}

inline void write_png_gray16(const std::string& path, const Grid2D<std::uint16_t>& img) {
  detail::PngWrite ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw IoError("cannot open PNG for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError("libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to encode PNG: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  png_set_swap(ctx.png);
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(ctx.png, const_cast<png_bytep>(reinterpret_cast<const png_byte*>(
                               &img.data()[static_cast<std::size_t>(y) * img.width()])));
  }
  png_write_end(ctx.png, nullptr);
}

/// Interleaved RGB, 3 bytes per pixel, row-major.
inline void write_png_rgb8(const std::string& path, int width, int height,
                           const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ContractError("write_png_rgb8: buffer size mismatch");
  }
  detail::PngWrite ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw IoError("cannot open PNG for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError("libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to encode PNG: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  for (int y = 0; y < height; ++y) {
    png_write_row(ctx.png, const_cast<png_bytep>(reinterpret_cast<const png_byte*>(
                               &rgb[static_cast<std::size_t>(y) * width * 3])));
  }
  png_write_end(ctx.png, nullptr);
}

inline std::vector<std::uint8_t> read_png_rgb8(const std::string& path, int& width, int& height) {
  detail::PngRead ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw IoError("cannot open PNG for reading: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw IoError("libpng allocation failure");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to decode PNG: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);
  width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  if (png_get_color_type(ctx.png, ctx.info) != PNG_COLOR_TYPE_RGB ||
      png_get_bit_depth(ctx.png, ctx.info) != 8) {
    throw IoError("expected 8-bit RGB PNG: " + path);
  }
  png_read_update_info(ctx.png, ctx.info);
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = &rgb[static_cast<std::size_t>(y) * width * 3];
  }
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("failed to decode PNG: " + path);
  png_read_image(ctx.png, rows.data());
  return rgb;
}

}  // namespace bevsplat
