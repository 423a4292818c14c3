#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sdg/core/binary_io.hpp"
#include "sdg/core/error.hpp"
#include "sdg/core/rng.hpp"
#include "sdg/nn/layers.hpp"
#include "sdg/prompt/tokenizer.hpp"

// Causal pre-LN transformer text encoder. Row i of the output is a function of
// tokens 0..i only.

namespace sdg::text {

using nn::Tensorf;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t max_len = prompt::kSequenceLength;
  std::size_t mlp_ratio = 4;
  std::uint64_t seed = 0;

  void validate() const {
    require(vocab_size >= 4, ErrorCode::InvalidConfig, "vocab_size must cover the special tokens");
    require(embed_dim > 0 && num_heads > 0 && num_layers > 0 && mlp_ratio > 0,
            ErrorCode::InvalidConfig, "encoder dimensions must be positive");
    require(embed_dim % num_heads == 0, ErrorCode::IndivisibleDim,
            "embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                std::to_string(num_heads) + " heads");
    require(max_len == prompt::kSequenceLength, ErrorCode::InvalidConfig,
            "max_len must be " + std::to_string(prompt::kSequenceLength));
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayer {
  nn::Norm ln1;
  nn::Linear to_q, to_k, to_v, to_out;
  nn::Norm ln2;
  nn::Linear fc1, fc2;

  EncoderLayer(const std::string& p, std::size_t c, std::size_t hidden)
      : ln1(p + ".ln1", c),
        to_q(p + ".to_q", c, c, false),
        to_k(p + ".to_k", c, c, false),
        to_v(p + ".to_v", c, c, false),
        to_out(p + ".to_out", c, c),
        ln2(p + ".ln2", c),
        fc1(p + ".fc1", c, hidden),
        fc2(p + ".fc2", hidden, c) {}
};

struct EncoderWeights {
  EncoderConfig config;
  nn::Param token_embedding;  // (vocab, c)
  nn::Param position_embedding;  // (l, c)
  std::vector<EncoderLayer> layers;
  nn::Norm final_ln;

  explicit EncoderWeights(const EncoderConfig& cfg)
      : config(cfg),
        token_embedding("encoder.token_embedding", {cfg.vocab_size, cfg.embed_dim}),
        position_embedding("encoder.position_embedding", {cfg.max_len, cfg.embed_dim}),
        final_ln("encoder.final_ln", cfg.embed_dim) {
    cfg.validate();
    for (std::size_t i = 0; i < cfg.num_layers; ++i)
      layers.emplace_back("encoder.layer" + std::to_string(i), cfg.embed_dim,
                          cfg.embed_dim * cfg.mlp_ratio);
  }

  nn::ParamList params() {
    nn::ParamList out;
    out.add(token_embedding);
    out.add(position_embedding);
    for (auto& l : layers) {
      l.ln1.collect(out);
      l.to_q.collect(out);
      l.to_k.collect(out);
      l.to_v.collect(out);
      l.to_out.collect(out);
      l.ln2.collect(out);
      l.fc1.collect(out);
      l.fc2.collect(out);
    }
    final_ln.collect(out);
    return out;
  }
};

struct EmbeddingSequence {
  Tensorf data;  // (l, c_p)
  prompt::TokenSequence source_tokens;
};

inline EncoderWeights init_encoder(const EncoderConfig& cfg) {
  EncoderWeights w(cfg);
  Rng rng(derive_seed(cfg.seed, 0x656e63));
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  nn::init_normal(w.token_embedding, rng, s);
  nn::init_normal(w.position_embedding, rng, s);
  for (auto& l : w.layers) {
    l.ln1.init();
    l.to_q.init(rng, s);
    l.to_k.init(rng, s);
    l.to_v.init(rng, s);
    l.to_out.init(rng, s);
    l.ln2.init();
    l.fc1.init(rng);
    l.fc2.init(rng);
  }
  w.final_ln.init();
  return w;
}

/// Adds the encoder forward pass to `g`; returns the (l, c_p) output node.
inline nn::Var encode_graph(nn::Graph& g, const prompt::TokenSequence& tokens,
                            const EncoderWeights& w) {
  const auto& cfg = w.config;
  for (int id : tokens.ids)
    require(id >= 0 && static_cast<std::size_t>(id) < cfg.vocab_size, ErrorCode::ShapeMismatch,
            "token id " + std::to_string(id) + " outside the encoder vocabulary");
  nn::Var x = g.add(g.embedding(tokens.ids, g.param(w.token_embedding)),
                    g.param(w.position_embedding));
  for (const auto& l : w.layers) {
    nn::Var h = l.ln1.layer(g, x);
    nn::Var att = g.causal_attention(l.to_q(g, h), l.to_k(g, h), l.to_v(g, h), cfg.num_heads);
    x = g.add(x, l.to_out(g, att));
    h = l.ln2.layer(g, x);
    x = g.add(x, l.fc2(g, g.quick_gelu(l.fc1(g, h))));
  }
  return w.final_ln.layer(g, x);
}

inline EmbeddingSequence encode(const prompt::TokenSequence& tokens, const EncoderWeights& w) {
  nn::Graph g(false);
  EmbeddingSequence out{g.value(encode_graph(g, tokens, w)), tokens};
  require(out.data.all_finite(), ErrorCode::DivergedLoss, "encoder produced non-finite rows");
  return out;
}

inline void write_config(std::ostream& os, const EncoderConfig& c) {
  binio::write_u32(os, static_cast<std::uint32_t>(c.vocab_size));
  binio::write_u32(os, static_cast<std::uint32_t>(c.embed_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(c.num_layers));
  binio::write_u32(os, static_cast<std::uint32_t>(c.num_heads));
  binio::write_u32(os, static_cast<std::uint32_t>(c.max_len));
  binio::write_u32(os, static_cast<std::uint32_t>(c.mlp_ratio));
}

inline EncoderConfig read_encoder_config(std::istream& is) {
  EncoderConfig c;
  c.vocab_size = binio::read_u32(is);
  c.embed_dim = binio::read_u32(is);
  c.num_layers = binio::read_u32(is);
  c.num_heads = binio::read_u32(is);
  c.max_len = binio::read_u32(is);
  c.mlp_ratio = binio::read_u32(is);
  c.validate();
  return c;
}

}  // namespace sdg::text
