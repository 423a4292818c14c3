#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "sdg/core/error.hpp"
#include "sdg/io/image_io.hpp"

// 8-bit RGB PNG writer. Requires libpng; nothing else in the library does.

namespace sdg::io {

inline void write_png(const std::string& path, const Rgb8& rgb) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorCode::IoError, "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoError, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoError, "png: failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(rgb.width), static_cast<png_uint_32>(rgb.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < rgb.height; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb.pixels.data() + y * rgb.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::string& path, const Tensor<float>& img) { write_png(path, to_rgb8(img)); }

}  // namespace sdg::io
