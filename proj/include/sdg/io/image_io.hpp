#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/core/tensor.hpp"

// Binary PPM (P6) and PGM (P5), 8-bit. Images are (3, h, w) floats in [0, 1].

namespace sdg::io {

/// 8-bit interleaved RGB buffer.
struct Rgb8 {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 per pixel

  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline Rgb8 to_rgb8(const Tensor<float>& img) {
  require(img.rank() == 3 && img.dim(0) == 3, ErrorCode::ShapeMismatch,
          "expected a (3, h, w) image, got " + shape_string(img.shape()));
  Rgb8 out{img.dim(2), img.dim(1), {}};
  out.pixels.resize(out.width * out.height * 3);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.pixels[(y * out.width + x) * 3 + c] = to_byte(img.at(c, y, x));
  return out;
}

inline Tensor<float> from_rgb8(const Rgb8& rgb) {
  Tensor<float> img({3, rgb.height, rgb.width});
  for (std::size_t y = 0; y < rgb.height; ++y)
    for (std::size_t x = 0; x < rgb.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>(rgb.pixels[(y * rgb.width + x) * 3 + c]) / 255.0f;
  return img;
}

inline void write_netpbm(const std::string& path, const char* magic, std::size_t w, std::size_t h,
                         const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::IoError, "cannot write " + path);
  os << magic << '\n' << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path);
}

inline void write_ppm(const std::string& path, const Rgb8& rgb) {
  write_netpbm(path, "P6", rgb.width, rgb.height, rgb.pixels);
}

inline void write_ppm(const std::string& path, const Tensor<float>& img) { write_ppm(path, to_rgb8(img)); }

inline void write_pgm(const std::string& path, std::size_t w, std::size_t h, const std::vector<std::uint8_t>& gray) {
  require(gray.size() == w * h, ErrorCode::ShapeMismatch, "pgm: buffer size");
  write_netpbm(path, "P5", w, h, gray);
}

namespace detail {

inline std::size_t read_header_int(std::istream& is, const std::string& path) {
  for (;;) {
    is >> std::ws;
    if (is.peek() == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    break;
  }
  long long v = -1;
  is >> v;
  require(static_cast<bool>(is) && v > 0, ErrorCode::FormatError, path + ": bad netpbm header");
  return static_cast<std::size_t>(v);
}

inline std::vector<std::uint8_t> read_netpbm(const std::string& path, const std::string& magic, std::size_t channels,
                                             std::size_t& w, std::size_t& h) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open " + path);
  std::string m;
  is >> m;
  require(m == magic, ErrorCode::FormatError, path + ": expected " + magic + " file");
  w = read_header_int(is, path);
  h = read_header_int(is, path);
  const std::size_t maxval = read_header_int(is, path);
  require(maxval == 255, ErrorCode::FormatError, path + ": only 8-bit files are supported");
  is.get();
  std::vector<std::uint8_t> bytes(w * h * channels);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(is), ErrorCode::FormatError, path + ": truncated pixel data");
  return bytes;
}

}  // namespace detail

inline Rgb8 read_ppm(const std::string& path) {
  Rgb8 out;
  out.pixels = detail::read_netpbm(path, "P6", 3, out.width, out.height);
  return out;
}

inline std::vector<std::uint8_t> read_pgm(const std::string& path, std::size_t& w, std::size_t& h) {
  return detail::read_netpbm(path, "P5", 1, w, h);
}

}  // namespace sdg::io
