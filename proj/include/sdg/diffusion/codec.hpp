#pragma once

#include <algorithm>

#include "sdg/core/error.hpp"
#include "sdg/core/tensor.hpp"

// Fixed image <-> latent maps: average pooling by `factor` with z = (x - 0.5) * 2,
// and its inverse by nearest upsampling with x = z / 2 + 0.5, clamped to [0, 1].

namespace sdg::diffusion {

struct LatentCodec {
  std::size_t factor = 4;
  float scale = 2.0f;
  float shift = 0.5f;

  Tensor<float> encode(const Tensor<float>& image) const {
    require(image.rank() == 3 && image.dim(1) % factor == 0 && image.dim(2) % factor == 0,
            ErrorCode::ShapeMismatch, "codec: image " + shape_string(image.shape()));
    const std::size_t c = image.dim(0), h = image.dim(1) / factor, w = image.dim(2) / factor;
    Tensor<float> z({c, h, w});
    const float inv = 1.0f / static_cast<float>(factor * factor);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (std::size_t dy = 0; dy < factor; ++dy)
            for (std::size_t dx = 0; dx < factor; ++dx)
              acc += image.at(ch, y * factor + dy, x * factor + dx);
          z.at(ch, y, x) = (acc * inv - shift) * scale;
        }
    return z;
  }

  Tensor<float> decode(const Tensor<float>& z) const {
    require(z.rank() == 3, ErrorCode::ShapeMismatch, "codec: latent " + shape_string(z.shape()));
    const std::size_t c = z.dim(0), h = z.dim(1) * factor, w = z.dim(2) * factor;
    Tensor<float> img({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          img.at(ch, y, x) = std::clamp(z.at(ch, y / factor, x / factor) / scale + shift, 0.0f, 1.0f);
    return img;
  }
};

}  // namespace sdg::diffusion
