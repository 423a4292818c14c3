#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sdg/attention/attention.hpp"
#include "sdg/core/binary_io.hpp"
#include "sdg/core/error.hpp"
#include "sdg/core/rng.hpp"
#include "sdg/nn/layers.hpp"

// Two-level toy UNet over (c_z, S, S) latents.
//
//   in conv -> +pos -> res(C1) [attn S] -> down -> res(C2) [attn S/2] -> mid res
//   -> cat skip -> res(C2) [attn S/2] -> up -> cat skip -> res(C1) [attn S] -> out
//
// Cross-attention blocks sit at the listed resolutions of the down and up
// paths, in that order: down-S, down-S/2, up-S/2, up-S.

namespace sdg::diffusion {

using nn::Graph;
using nn::Tensorf;
using nn::Var;

struct UNetConfig {
  std::size_t latent_channels = 3;
  std::size_t latent_size = 16;
  std::size_t base_channels = 16;
  std::size_t mid_channels = 32;
  std::size_t groups = 4;
  std::size_t time_dim = 64;
  std::size_t heads = 4;
  std::size_t head_dim = 8;
  std::size_t context_dim = 32;
  // Resolutions (in latent pixels) with cross-attention.
  std::vector<std::size_t> attn_down{16, 8};
  std::vector<std::size_t> attn_up{8, 16};
  std::uint64_t seed = 0;

  void validate() const {
    require(latent_channels > 0 && latent_size >= 4 && latent_size % 2 == 0,
            ErrorCode::InvalidConfig, "latent size must be even and at least 4");
    require(base_channels % groups == 0 && mid_channels % groups == 0 &&
                (base_channels + mid_channels) % groups == 0,
            ErrorCode::IndivisibleDim, "channel counts must be divisible by the group count");
    require(heads > 0 && head_dim > 0 && context_dim > 0 && time_dim % 2 == 0,
            ErrorCode::InvalidConfig, "attention and time dims must be positive");
    require(!attn_down.empty() && !attn_up.empty(), ErrorCode::InvalidConfig,
            "cross-attention is required in both the down and the up path");
    for (const auto& list : {attn_down, attn_up})
      for (std::size_t r : list)
        require(r == latent_size || r == latent_size / 2, ErrorCode::InvalidConfig,
                "cross-attention resolution " + std::to_string(r) + " does not exist");
  }

  bool has_attention(bool down, std::size_t res) const {
    const auto& list = down ? attn_down : attn_up;
    return std::find(list.begin(), list.end(), res) != list.end();
  }

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

struct ResBlock {
  nn::Norm norm1;
  nn::Conv2d conv1;
  nn::Linear time_proj;
  nn::Norm norm2;
  nn::Conv2d conv2;
  nn::Conv2d skip;  // 1x1, only when channel counts differ
  bool has_skip = false;

  ResBlock(const std::string& p, std::size_t in, std::size_t out, std::size_t time_dim)
      : norm1(p + ".norm1", in),
        conv1(p + ".conv1", in, out),
        time_proj(p + ".time_proj", time_dim, out),
        norm2(p + ".norm2", out),
        conv2(p + ".conv2", out, out),
        has_skip(in != out) {
    if (has_skip) skip = nn::Conv2d(p + ".skip", in, out, 1);
  }

  void init(Rng& rng) {
    norm1.init();
    conv1.init(rng);
    time_proj.init(rng);
    norm2.init();
    conv2.init(rng, 0.5);
    if (has_skip) skip.init(rng);
  }

  void collect(nn::ParamList& out) {
    norm1.collect(out);
    conv1.collect(out);
    time_proj.collect(out);
    norm2.collect(out);
    conv2.collect(out);
    if (has_skip) skip.collect(out);
  }

  Var operator()(Graph& g, Var x, Var temb_act, std::size_t groups) const {
    Var h = conv1(g, g.silu(norm1.group(g, x, groups)));
    h = g.add_channel_bias(h, g.reshape(time_proj(g, temb_act), {time_proj.weight.value.dim(0)}));
    h = conv2(g, g.silu(norm2.group(g, h, groups)));
    return g.add(has_skip ? skip(g, x) : x, h);
  }
};

struct CrossAttentionBlock {
  nn::Norm norm;
  nn::Param to_q, to_k, to_v, to_out;
  std::size_t heads = 1;

  CrossAttentionBlock(const std::string& p, std::size_t channels, std::size_t ctx,
                      std::size_t heads_, std::size_t head_dim)
      : norm(p + ".norm", channels),
        to_q(p + ".to_q", {heads_ * head_dim, channels}),
        to_k(p + ".to_k", {heads_ * head_dim, ctx}),
        to_v(p + ".to_v", {heads_ * head_dim, ctx}),
        to_out(p + ".to_out", {channels, heads_ * head_dim}),
        heads(heads_) {}

  void init(Rng& rng) {
    norm.init();
    nn::init_normal(to_q, rng, 1.0 / std::sqrt(static_cast<double>(to_q.value.dim(1))));
    nn::init_normal(to_k, rng, 1.0 / std::sqrt(static_cast<double>(to_k.value.dim(1))));
    nn::init_normal(to_v, rng, 1.0 / std::sqrt(static_cast<double>(to_v.value.dim(1))));
    nn::init_normal(to_out, rng, 0.5 / std::sqrt(static_cast<double>(to_out.value.dim(1))));
  }

  void collect(nn::ParamList& out) {
    norm.collect(out);
    out.add(to_q);
    out.add(to_k);
    out.add(to_v);
    out.add(to_out);
  }
};

/// Conditioning for one UNet evaluation: the prompt context node plus
/// optional constant concept contexts with their ordering keys.
struct UNetConditioning {
  Var prompt;
  std::vector<const Tensorf*> spans;
  std::vector<attention::TermKey> keys;
  attention::FuseOptions options;
  /// Receives each cross-attention layer's prompt-key maps, in layer order.
  const Graph::MapObserver* observer = nullptr;
};

struct UNetWeights {
  UNetConfig config;
  nn::Linear time1, time2;
  nn::Conv2d conv_in;
  nn::Param pos;  // (C1, S, S) learned spatial embedding
  ResBlock down1;
  std::vector<CrossAttentionBlock> attn;  // existing blocks in layer order
  nn::Conv2d downsample;
  ResBlock down2, mid, up2;
  nn::Conv2d upconv;
  ResBlock up1;
  nn::Norm norm_out;
  nn::Conv2d conv_out;

  explicit UNetWeights(const UNetConfig& c)
      : config(c),
        time1("unet.time1", c.time_dim, c.time_dim),
        time2("unet.time2", c.time_dim, c.time_dim),
        conv_in("unet.conv_in", c.latent_channels, c.base_channels),
        pos("unet.pos", {c.base_channels, c.latent_size, c.latent_size}),
        down1("unet.down1", c.base_channels, c.base_channels, c.time_dim),
        downsample("unet.downsample", c.base_channels, c.base_channels, 3, 2),
        down2("unet.down2", c.base_channels, c.mid_channels, c.time_dim),
        mid("unet.mid", c.mid_channels, c.mid_channels, c.time_dim),
        up2("unet.up2", 2 * c.mid_channels, c.mid_channels, c.time_dim),
        upconv("unet.upconv", c.mid_channels, c.mid_channels),
        up1("unet.up1", c.mid_channels + c.base_channels, c.base_channels, c.time_dim),
        norm_out("unet.norm_out", c.base_channels),
        conv_out("unet.conv_out", c.base_channels, c.latent_channels) {
    c.validate();
    const std::size_t s = c.latent_size, h = s / 2;
    auto add = [&](const char* name, bool down, std::size_t res, std::size_t ch) {
      if (c.has_attention(down, res))
        attn.emplace_back(std::string("unet.") + name, ch, c.context_dim, c.heads, c.head_dim);
    };
    add("attn_down1", true, s, c.base_channels);
    add("attn_down2", true, h, c.mid_channels);
    add("attn_up2", false, h, c.mid_channels);
    add("attn_up1", false, s, c.base_channels);
  }

  nn::ParamList params() {
    nn::ParamList out;
    time1.collect(out);
    time2.collect(out);
    conv_in.collect(out);
    out.add(pos);
    down1.collect(out);
    downsample.collect(out);
    down2.collect(out);
    mid.collect(out);
    up2.collect(out);
    upconv.collect(out);
    up1.collect(out);
    for (auto& a : attn) a.collect(out);
    norm_out.collect(out);
    conv_out.collect(out);
    return out;
  }

  std::size_t attention_layers() const { return attn.size(); }
};

inline UNetWeights init_unet(const UNetConfig& cfg) {
  UNetWeights w(cfg);
  Rng rng(derive_seed(cfg.seed, 0x756e6574));
  w.time1.init(rng);
  w.time2.init(rng);
  w.conv_in.init(rng);
  nn::init_normal(w.pos, rng, 0.1);
  w.down1.init(rng);
  w.downsample.init(rng);
  w.down2.init(rng);
  w.mid.init(rng);
  w.up2.init(rng);
  w.upconv.init(rng);
  w.up1.init(rng);
  for (auto& a : w.attn) a.init(rng);
  w.norm_out.init();
  w.conv_out.init(rng, 0.1);
  return w;
}

/// Sinusoidal embedding of an integer timestep, width `dim`.
inline Tensorf timestep_embedding(std::size_t t, std::size_t dim) {
  Tensorf out({1, dim});
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = static_cast<double>(t) * freq;
    out[i] = static_cast<float>(std::cos(arg));
    out[half + i] = static_cast<float>(std::sin(arg));
  }
  return out;
}

/// One UNet evaluation added to `g`; z is (c_z, S, S), the result has the same shape.
inline Var unet_forward(Graph& g, const UNetWeights& w, Var z, std::size_t t,
                        const UNetConditioning& cond) {
  const auto& c = w.config;
  require(g.shape(z) == Shape({c.latent_channels, c.latent_size, c.latent_size}),
          ErrorCode::ShapeMismatch, "unet: latent shape " + shape_string(g.shape(z)));
  require(g.shape(cond.prompt).size() == 2 && g.shape(cond.prompt)[1] == c.context_dim,
          ErrorCode::ShapeMismatch, "unet: context width differs from the model's");
  Var temb = w.time2(g, g.silu(w.time1(g, g.constant(timestep_embedding(t, c.time_dim)))));
  const Var temb_act = g.silu(temb);

  std::size_t attn_index = 0;
  auto attend = [&](Var x, bool down, std::size_t res) -> Var {
    if (!c.has_attention(down, res)) return x;
    const auto& blk = w.attn[attn_index++];
    const Shape s = g.shape(x);
    const std::size_t ch = s[0], hw = s[1] * s[2];
    Var rows = g.transpose(blk.norm.group(g, x, c.groups), {hw, ch});
    Graph::CrossAttentionParams p{blk.to_q, blk.to_k, blk.to_v, blk.to_out, blk.heads};
    Var o = g.cross_attention(rows, cond.prompt, cond.spans, cond.keys, cond.options, p, cond.observer);
    return g.add(x, g.transpose(o, {ch, s[1], s[2]}));
  };

  const std::size_t s = c.latent_size, h = s / 2;
  Var x = g.add(w.conv_in(g, z), g.param(w.pos));
  Var d1 = attend(w.down1(g, x, temb_act, c.groups), true, s);
  Var x2 = w.downsample(g, d1);
  Var d2 = attend(w.down2(g, x2, temb_act, c.groups), true, h);
  Var m = w.mid(g, d2, temb_act, c.groups);
  Var u2 = attend(w.up2(g, g.concat_channels(m, d2), temb_act, c.groups), false, h);
  Var up = w.upconv(g, g.upsample2x(u2));
  Var u1 = attend(w.up1(g, g.concat_channels(up, d1), temb_act, c.groups), false, s);
  return w.conv_out(g, g.silu(w.norm_out.group(g, u1, c.groups)));
}

inline void write_config(std::ostream& os, const UNetConfig& c) {
  for (std::size_t v : {c.latent_channels, c.latent_size, c.base_channels, c.mid_channels, c.groups,
                        c.time_dim, c.heads, c.head_dim, c.context_dim})
    binio::write_u32(os, static_cast<std::uint32_t>(v));
  for (const auto& list : {c.attn_down, c.attn_up}) {
    binio::write_u32(os, static_cast<std::uint32_t>(list.size()));
    for (std::size_t r : list) binio::write_u32(os, static_cast<std::uint32_t>(r));
  }
}

inline UNetConfig read_unet_config(std::istream& is) {
  UNetConfig c;
  for (std::size_t* f : {&c.latent_channels, &c.latent_size, &c.base_channels, &c.mid_channels,
                         &c.groups, &c.time_dim, &c.heads, &c.head_dim, &c.context_dim})
    *f = binio::read_u32(is);
  for (auto* list : {&c.attn_down, &c.attn_up}) {
    const std::uint32_t n = binio::read_u32(is);
    require(n <= 8, ErrorCode::FormatError, "implausible attention list length");
    list->assign(n, 0);
    for (auto& r : *list) r = binio::read_u32(is);
  }
  c.validate();
  return c;
}

}  // namespace sdg::diffusion
