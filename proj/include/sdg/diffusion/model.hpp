#pragma once

#include <fstream>
#include <string>

#include "sdg/core/binary_io.hpp"
#include "sdg/diffusion/sampler.hpp"
#include "sdg/diffusion/unet.hpp"
#include "sdg/text/encoder.hpp"

namespace sdg::diffusion {

struct ScheduleConfig {
  std::size_t train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return linear_schedule(train_steps, beta_start, beta_end); }
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Text encoder, denoiser and noise schedule trained together.
struct Model {
  text::EncoderWeights encoder;
  UNetWeights unet;
  ScheduleConfig schedule_config;
  NoiseSchedule schedule;

  Model(text::EncoderWeights e, UNetWeights u, ScheduleConfig s)
      : encoder(std::move(e)), unet(std::move(u)), schedule_config(s), schedule(s.build()) {
    require(encoder.config.embed_dim == unet.config.context_dim, ErrorCode::InvalidConfig,
            "encoder width " + std::to_string(encoder.config.embed_dim) +
                " differs from the UNet context width " + std::to_string(unet.config.context_dim));
  }

  /// Parameters in checkpoint order: encoder first, then UNet.
  nn::ParamList params() {
    nn::ParamList out = encoder.params();
    out.extend(unet.params());
    return out;
  }
};

inline Model init_model(const text::EncoderConfig& ec, const UNetConfig& uc,
                        const ScheduleConfig& sc = {}) {
  return Model(text::init_encoder(ec), init_unet(uc), sc);
}

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// SDGW, version, encoder config, UNet config, schedule, then every
/// parameter as little-endian f32 in declared order.
inline void write_checkpoint(std::ostream& os, Model& m) {
  binio::write_magic(os, "SDGW");
  binio::write_u32(os, kCheckpointVersion);
  text::write_config(os, m.encoder.config);
  write_config(os, m.unet.config);
  binio::write_u32(os, static_cast<std::uint32_t>(m.schedule_config.train_steps));
  binio::write_f64(os, m.schedule_config.beta_start);
  binio::write_f64(os, m.schedule_config.beta_end);
  for (const nn::Param* p : m.params())
    for (float v : p->value.values()) binio::write_f32(os, v);
}

inline Model read_checkpoint(std::istream& is) {
  binio::expect_magic(is, "SDGW");
  const std::uint32_t version = binio::read_u32(is);
  require(version == kCheckpointVersion, ErrorCode::FormatError,
          "unsupported checkpoint version " + std::to_string(version));
  text::EncoderConfig ec = text::read_encoder_config(is);
  UNetConfig uc = read_unet_config(is);
  ScheduleConfig sc;
  sc.train_steps = binio::read_u32(is);
  sc.beta_start = binio::read_f64(is);
  sc.beta_end = binio::read_f64(is);
  Model m(text::EncoderWeights(ec), UNetWeights(uc), sc);
  for (nn::Param* p : m.params())
    for (auto& v : p->value.values()) v = binio::read_f32(is);
  is.peek();
  require(is.eof(), ErrorCode::FormatError, "trailing bytes after checkpoint tensors");
  return m;
}

inline void save_checkpoint(const std::string& path, Model& m) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::IoError, "cannot write checkpoint " + path);
  write_checkpoint(os, m);
  require(static_cast<bool>(os), ErrorCode::IoError, "failed writing checkpoint " + path);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open checkpoint " + path);
  return read_checkpoint(is);
}

}  // namespace sdg::diffusion
