#pragma once

#include <fstream>
#include <string>

#include "sdg/core/binary_io.hpp"
#include "sdg/core/tensor.hpp"

// SDGT: magic, u32 version, u32 ndim, u32 dims[ndim], then row-major f32.

namespace sdg::io {

inline constexpr std::uint32_t kTensorDumpVersion = 1;

inline void write_tensor(std::ostream& os, const Tensor<float>& t) {
  binio::write_magic(os, "SDGT");
  binio::write_u32(os, kTensorDumpVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binio::write_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.values()) binio::write_f32(os, v);
}

inline Tensor<float> read_tensor(std::istream& is) {
  binio::expect_magic(is, "SDGT");
  const std::uint32_t version = binio::read_u32(is);
  require(version == kTensorDumpVersion, ErrorCode::FormatError,
          "unsupported tensor dump version " + std::to_string(version));
  const std::uint32_t ndim = binio::read_u32(is);
  require(ndim <= 8, ErrorCode::FormatError, "tensor dump rank " + std::to_string(ndim));
  Shape shape;
  for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(binio::read_u32(is));
  Tensor<float> t(shape);
  for (auto& v : t.values()) v = binio::read_f32(is);
  return t;
}

inline void save_tensor(const std::string& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::IoError, "cannot write " + path);
  write_tensor(os, t);
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing " + path);
}

inline Tensor<float> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open " + path);
  return read_tensor(is);
}

}  // namespace sdg::io
