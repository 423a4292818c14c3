#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sdg/align/alignment.hpp"
#include "sdg/attention/layout_check.hpp"
#include "sdg/diffusion/codec.hpp"
#include "sdg/diffusion/model.hpp"
#include "sdg/prompt/concepts.hpp"

namespace sdg::diffusion {

enum class Method { Baseline, MultiValue, MultiKey, Composable };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Baseline: return "base";
    case Method::MultiValue: return "mv";
    case Method::MultiKey: return "mk";
    case Method::Composable: return "compose";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (auto m : {Method::Baseline, Method::MultiValue, Method::MultiKey, Method::Composable})
    if (s == to_string(m)) return m;
  fail(ErrorCode::InvalidConfig, "unknown method '" + std::string(s) + "' (base, mv, mk, compose)");
}

inline attention::FusionMode fusion_mode(Method m) {
  switch (m) {
    case Method::MultiValue: return attention::FusionMode::MultiValue;
    case Method::MultiKey: return attention::FusionMode::MultiKey;
    default: return attention::FusionMode::Baseline;
  }
}

inline std::string_view to_string(prompt::ParserSource p) {
  switch (p) {
    case prompt::ParserSource::Chunker: return "chunk";
    case prompt::ParserSource::Tree: return "tree";
    case prompt::ParserSource::SceneGraph: return "sg";
  }
  return "?";
}

inline prompt::ParserSource parse_parser_source(std::string_view s) {
  if (s == "chunk" || s == "chunker") return prompt::ParserSource::Chunker;
  if (s == "tree") return prompt::ParserSource::Tree;
  if (s == "sg" || s == "scene-graph") return prompt::ParserSource::SceneGraph;
  fail(ErrorCode::InvalidConfig, "unknown parser '" + std::string(s) + "' (chunk, tree, sg)");
}

struct GenerationConfig {
  std::size_t steps = 50;
  SamplerKind sampler = SamplerKind::Plms;
  double guidance_scale = 7.5;
  bool ddpm_zero_noise = false;
  /// Clamp for the sampler's x0 estimate; toy latents live in [-1, 1]. 0 disables.
  double clip_x0 = 1.0;
  Method method = Method::Baseline;
  prompt::ParserSource parser = prompt::ParserSource::Chunker;
  std::string tree_path;
  std::string graph_path;
  align::AlignmentMode alignment = align::AlignmentMode::Realign;
  align::PaddingPattern padding = align::PaddingPattern::Full;
  bool include_span_eos = false;
  attention::KeyPairing pairing = attention::KeyPairing::Paired;
  std::vector<double> concept_weights;
  std::size_t max_concepts = prompt::kMaxConcepts;
  /// Number of equally spaced steps whose attention maps are kept (0 = none).
  std::size_t record_steps = 5;
  bool record_latents = false;
  std::uint64_t seed = 0;

  void validate() const {
    require(steps >= 1, ErrorCode::InvalidConfig, "steps must be >= 1");
    require(guidance_scale >= 0.0, ErrorCode::InvalidConfig, "guidance scale must be >= 0");
    require(clip_x0 >= 0.0, ErrorCode::InvalidConfig, "clip_x0 must be >= 0");
    require(max_concepts >= 1, ErrorCode::InvalidConfig, "max_concepts must be >= 1");
  }
};

/// Everything the sampler needs besides the noise.
struct PreparedPrompt {
  std::string prompt;
  prompt::TokenSequence tokens;
  std::vector<prompt::ConceptSpan> concepts;
  std::size_t dropped = 0;
  std::vector<std::string> segments;  // composable method only
  nn::Tensorf prompt_rows;            // conditional prompt context after the padding mask
  std::vector<nn::Tensorf> span_rows; // aligned concept contexts, same mask
  std::vector<attention::TermKey> keys;
  std::vector<nn::Tensorf> segment_rows;
  std::size_t kept_content = 0;       // content tokens surviving the padding mask
};

struct GenerationRecord {
  std::string prompt;
  Method method = Method::Baseline;
  std::vector<prompt::ConceptSpan> concepts;
  std::size_t dropped_concepts = 0;
  std::vector<std::string> segments;
  attention::AttentionTrace trace;
  std::vector<std::size_t> latent_steps;
  std::vector<nn::Tensorf> latents;  // z after each recorded step
  nn::Tensorf z_T;
  nn::Tensorf z0;
  nn::Tensorf image;
  std::uint64_t seed = 0;

  /// Value tensors combined per cross-attention layer in the conditional branch.
  std::size_t value_sets_per_layer() const {
    return (method == Method::MultiValue || method == Method::MultiKey) ? 1 + concepts.size() : 1;
  }
};

/// Step indices (0 = first denoising step) at which maps are recorded.
inline std::vector<std::size_t> record_indices(std::size_t steps, std::size_t count) {
  std::vector<std::size_t> out;
  if (count == 0) return out;
  if (count >= steps) {
    for (std::size_t i = 0; i < steps; ++i) out.push_back(i);
    return out;
  }
  if (count == 1) return {0};
  for (std::size_t i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(steps - 1) / static_cast<double>(count - 1)));
    if (out.empty() || out.back() != k) out.push_back(k);
  }
  return out;
}

/// Splits a prompt into segments at the keyword "and".
inline std::vector<std::string> split_segments(std::string_view prompt) {
  std::vector<std::string> out;
  std::vector<std::string> cur;
  for (auto& w : prompt::normalize_words(prompt)) {
    if (w == "and") {
      if (!cur.empty()) out.push_back(prompt::join_words(cur));
      cur.clear();
    } else {
      cur.push_back(std::move(w));
    }
  }
  if (!cur.empty()) out.push_back(prompt::join_words(cur));
  return out;
}

class Pipeline {
 public:
  Pipeline(const Model& model, const prompt::Vocabulary& vocab) : model_(model), vocab_(vocab) {
    require(vocab.size() == model.encoder.config.vocab_size, ErrorCode::InvalidConfig,
            "vocabulary has " + std::to_string(vocab.size()) + " tokens, encoder expects " +
                std::to_string(model.encoder.config.vocab_size));
  }

  const Model& model() const { return model_; }
  const prompt::Vocabulary& vocab() const { return vocab_; }
  LatentCodec codec() const { return {}; }

  text::EmbeddingSequence encode(const prompt::TokenSequence& t) const {
    return text::encode(t, model_.encoder);
  }
  text::EmbeddingSequence encode(std::string_view text) const {
    return encode(prompt::tokenize(text, vocab_));
  }

  /// Concept set C from the configured parser.
  prompt::ConceptSet concepts(std::string_view prompt, const prompt::TokenSequence& tokens,
                              const GenerationConfig& cfg) const {
    using prompt::ParserSource;
    switch (cfg.parser) {
      case ParserSource::Chunker:
        return prompt::apply_cap(prompt::chunk_noun_phrases(tokens, vocab_), cfg.max_concepts);
      case ParserSource::Tree: {
        require(!cfg.tree_path.empty(), ErrorCode::InvalidConfig, "tree parser needs a tree file");
        const auto tree = prompt::load_parse_tree(cfg.tree_path, prompt);
        return prompt::locate_concepts(prompt::extract_noun_phrases(tree), tokens, vocab_, cfg.max_concepts);
      }
      case ParserSource::SceneGraph: {
        require(!cfg.graph_path.empty(), ErrorCode::InvalidConfig, "scene-graph parser needs a graph file");
        const auto graph = prompt::load_scene_graph(cfg.graph_path, prompt);
        return prompt::locate_concepts(prompt::extract_scene_graph_spans(graph), tokens, vocab_,
                                       cfg.max_concepts);
      }
    }
    return {};
  }

  /// Encodes the prompt and, for structured methods, every concept.
  PreparedPrompt prepare(std::string_view prompt, const GenerationConfig& cfg) const {
    cfg.validate();
    PreparedPrompt p;
    p.prompt = std::string(prompt);
    p.tokens = prompt::tokenize(prompt, vocab_);
    const text::EmbeddingSequence wp = encode(p.tokens);
    if (cfg.method == Method::Composable) {
      p.segments = split_segments(prompt);
      for (const auto& s : p.segments) p.segment_rows.push_back(encode(s).data);
      p.prompt_rows = wp.data;
      p.kept_content = p.tokens.content_len;
      return p;
    }
    const auto set = concepts(prompt, p.tokens, cfg);
    p.concepts = set.spans;
    p.dropped = set.dropped;
    std::vector<text::EmbeddingSequence> aligned;
    if (cfg.method != Method::Baseline) {
      for (const auto& span : p.concepts) {
        const auto wi = encode(prompt::tokenize(span.text, vocab_));
        aligned.push_back(cfg.alignment == align::AlignmentMode::Realign
                              ? align::realign(wp, wi, span, {cfg.include_span_eos})
                              : align::naive_expand(wi, span));
        p.keys.push_back({span.token_start, span.token_end});
      }
    }
    apply_mask(p, wp, aligned, cfg.padding);
    return p;
  }

  /// Conditioning from a precomputed prompt embedding, Baseline only.
  PreparedPrompt prepare_embedding(const text::EmbeddingSequence& wp, const GenerationConfig& cfg) const {
    cfg.validate();
    PreparedPrompt p;
    p.prompt = prompt::detokenize(wp.source_tokens, vocab_);
    p.tokens = wp.source_tokens;
    apply_mask(p, wp, {}, cfg.padding);
    return p;
  }

  nn::Tensorf initial_noise(std::uint64_t seed) const {
    const auto& c = model_.unet.config;
    nn::Tensorf z({c.latent_channels, c.latent_size, c.latent_size});
    Rng rng(derive_seed(seed, 1));
    for (auto& v : z.values()) v = static_cast<float>(rng.normal());
    return z;
  }

  /// One denoiser evaluation. contexts[0] is the prompt sequence, the rest are
  /// aligned concept sequences ordered by `keys` (default: list order).
  nn::Tensorf predict_noise(const nn::Tensorf& z, std::size_t t, std::span<const nn::Tensorf> contexts,
                            attention::FusionMode mode, std::vector<attention::TermKey> keys = {},
                            const nn::Graph::MapObserver* observer = nullptr,
                            attention::KeyPairing pairing = attention::KeyPairing::Paired,
                            std::vector<double> weights = {}) const {
    require(!contexts.empty(), ErrorCode::ShapeMismatch, "predict_noise: missing prompt context");
    nn::Graph g(false);
    UNetConditioning cond;
    cond.prompt = g.constant(contexts[0]);
    for (std::size_t i = 1; i < contexts.size(); ++i) cond.spans.push_back(&contexts[i]);
    if (keys.empty())
      for (std::size_t i = 1; i < contexts.size(); ++i) keys.push_back({i, i});
    require(keys.size() == cond.spans.size(), ErrorCode::ShapeMismatch, "predict_noise: keys per span");
    cond.keys = std::move(keys);
    cond.options.mode = mode;
    cond.options.pairing = pairing;
    cond.options.concept_weights = std::move(weights);
    cond.observer = observer;
    return g.value(unet_forward(g, model_.unet, g.constant(z), t, cond));
  }

  GenerationRecord run(const PreparedPrompt& p, const GenerationConfig& cfg) const {
    cfg.validate();
    GenerationRecord rec;
    rec.prompt = p.prompt;
    rec.method = cfg.method;
    rec.concepts = p.concepts;
    rec.dropped_concepts = p.dropped;
    rec.segments = p.segments;
    rec.seed = cfg.seed;
    rec.trace.content_len = p.kept_content;
    rec.z_T = initial_noise(cfg.seed);

    const nn::Tensorf uncond = encode(prompt::empty_sequence(vocab_)).data;
    const auto recorded = record_indices(cfg.steps, cfg.record_steps);
    std::vector<nn::Tensorf> cond_ctx{p.prompt_rows};
    for (const auto& s : p.span_rows) cond_ctx.push_back(s);
    const attention::FusionMode mode = fusion_mode(cfg.method);

    attention::AttentionSnapshot* current = nullptr;
    const nn::Graph::MapObserver observer = [&](const nn::Tensorf& m) {
      if (current) current->layers.push_back(m);
    };

    EpsFn<float> eps_fn = [&](const nn::Tensorf& x, std::size_t t, std::size_t k, bool aux) {
      const bool rec_now = !aux && std::binary_search(recorded.begin(), recorded.end(), k);
      if (rec_now) {
        rec.trace.snapshots.push_back({k, t, {}});
        current = &rec.trace.snapshots.back();
      }
      const nn::Tensorf eu = predict_noise(x, t, std::span(&uncond, 1), attention::FusionMode::Baseline);
      nn::Tensorf out;
      if (cfg.method == Method::Composable) {
        std::vector<nn::Tensorf> ec;
        for (std::size_t j = 0; j < p.segment_rows.size(); ++j)
          ec.push_back(predict_noise(x, t, std::span(&p.segment_rows[j], 1), attention::FusionMode::Baseline,
                                     {}, j == 0 && rec_now ? &observer : nullptr));
        out = compose<float>(eu, ec, cfg.guidance_scale);
      } else {
        const nn::Tensorf ec = predict_noise(x, t, cond_ctx, mode, p.keys, rec_now ? &observer : nullptr,
                                             cfg.pairing, cfg.concept_weights);
        out = cfg_guidance(eu, ec, cfg.guidance_scale);
      }
      current = nullptr;
      require(out.all_finite(), ErrorCode::DivergedLoss, "non-finite noise prediction");
      return out;
    };

    SamplerOptions so{cfg.sampler, cfg.steps, cfg.ddpm_zero_noise, cfg.clip_x0};
    Rng noise_rng(derive_seed(cfg.seed, 2));
    rec.z0 = sample_loop<float>(model_.schedule, so, rec.z_T, eps_fn, noise_rng,
                                [&](std::size_t k, const nn::Tensorf& z) {
                                  if (!cfg.record_latents) return;
                                  rec.latent_steps.push_back(k);
                                  rec.latents.push_back(z);
                                });
    rec.image = codec().decode(rec.z0);
    return rec;
  }

  GenerationRecord sample(std::string_view prompt, const GenerationConfig& cfg) const {
    return run(prepare(prompt, cfg), cfg);
  }

 private:
  static nn::Tensorf cfg_guidance(const nn::Tensorf& u, const nn::Tensorf& c, double s) {
    return diffusion::cfg(u, c, s);
  }

  static void apply_mask(PreparedPrompt& p, const text::EmbeddingSequence& wp,
                         const std::vector<text::EmbeddingSequence>& aligned, align::PaddingPattern pattern) {
    const auto mask = align::padding_mask(wp.source_tokens, pattern);
    p.prompt_rows = align::compact_rows(wp.data, mask);
    for (const auto& a : aligned) p.span_rows.push_back(align::compact_rows(a.data, mask));
    p.kept_content = 0;
    for (std::size_t i = 1; i <= wp.source_tokens.content_len; ++i) p.kept_content += mask[i] ? 1 : 0;
  }

  const Model& model_;
  const prompt::Vocabulary& vocab_;
};

}  // namespace sdg::diffusion
