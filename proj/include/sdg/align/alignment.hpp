#pragma once

#include <algorithm>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/prompt/concepts.hpp"
#include "sdg/text/encoder.hpp"

namespace sdg::align {

using text::EmbeddingSequence;

enum class AlignmentMode { Realign, NaiveExpand };

enum class PaddingPattern { Full, NearestPadOnly, NoPad, NearestPadAlone };

inline std::string_view to_string(AlignmentMode m) {
  return m == AlignmentMode::Realign ? "realign" : "naive-expand";
}

inline AlignmentMode parse_alignment_mode(std::string_view s) {
  if (s == "realign") return AlignmentMode::Realign;
  if (s == "naive-expand" || s == "naive") return AlignmentMode::NaiveExpand;
  fail(ErrorCode::InvalidConfig, "unknown alignment mode '" + std::string(s) + "'");
}

inline std::string_view to_string(PaddingPattern p) {
  switch (p) {
    case PaddingPattern::Full: return "full";
    case PaddingPattern::NearestPadOnly: return "nearest-pad-only";
    case PaddingPattern::NoPad: return "no-pad";
    case PaddingPattern::NearestPadAlone: return "nearest-pad-alone";
  }
  return "?";
}

inline PaddingPattern parse_padding_pattern(std::string_view s) {
  for (auto p : {PaddingPattern::Full, PaddingPattern::NearestPadOnly, PaddingPattern::NoPad,
                 PaddingPattern::NearestPadAlone})
    if (s == to_string(p)) return p;
  fail(ErrorCode::InvalidConfig, "unknown padding pattern '" + std::string(s) + "'");
}

struct RealignOptions {
  /// Also overwrite the prompt's eos row with the span's own eos row.
  bool include_span_eos = false;
};

/// Copy of W_p with the span rows replaced by the content rows of W_i.
inline EmbeddingSequence realign(const EmbeddingSequence& wp, const EmbeddingSequence& wi,
                                 const prompt::ConceptSpan& span, RealignOptions opt = {}) {
  require(wp.data.shape() == wi.data.shape(), ErrorCode::ShapeMismatch,
          "realign: sequence shapes differ");
  require(span.token_start >= 1 && span.token_start < span.token_end &&
              span.token_end <= wp.source_tokens.content_len + 1,
          ErrorCode::SpanNotFound, "realign: span outside the prompt content");
  require(span.length() == wi.source_tokens.content_len, ErrorCode::LengthMismatch,
          "realign: span has " + std::to_string(span.length()) + " tokens, encoding has " +
              std::to_string(wi.source_tokens.content_len));
  EmbeddingSequence out = wp;
  const std::size_t c = wp.data.dim(1);
  auto copy_row = [&](std::size_t dst, std::size_t src) {
    std::copy_n(wi.data.data() + src * c, c, out.data.data() + dst * c);
  };
  for (std::size_t i = 0; i < span.length(); ++i) copy_row(span.token_start + i, 1 + i);
  if (opt.include_span_eos) copy_row(wp.source_tokens.eos_index(), wi.source_tokens.eos_index());
  return out;
}

/// The span encoding used as-is, with its own positions and pads.
inline EmbeddingSequence naive_expand(const EmbeddingSequence& wi, const prompt::ConceptSpan&) {
  return wi;
}

/// Keep-mask over the l positions, computed from a prompt's layout.
inline std::vector<bool> padding_mask(const prompt::TokenSequence& tokens, PaddingPattern p) {
  const std::size_t l = tokens.ids.size();
  std::vector<bool> keep(l, false);
  const std::size_t eos = tokens.eos_index();
  const std::size_t pad = tokens.first_pad_index();
  switch (p) {
    case PaddingPattern::Full:
      std::fill(keep.begin(), keep.end(), true);
      break;
    case PaddingPattern::NearestPadOnly:
      for (std::size_t i = 0; i <= eos; ++i) keep[i] = true;
      if (pad < l) keep[pad] = true;
      break;
    case PaddingPattern::NoPad:
      for (std::size_t i = 0; i <= eos; ++i) keep[i] = true;
      break;
    case PaddingPattern::NearestPadAlone:
      keep[0] = true;
      if (pad < l) keep[pad] = true;
      break;
  }
  return keep;
}

/// Rows of `data` where `keep` is set, in order.
inline nn::Tensorf compact_rows(const nn::Tensorf& data, const std::vector<bool>& keep) {
  require(data.rank() == 2 && data.dim(0) == keep.size(), ErrorCode::ShapeMismatch,
          "compact_rows: mask length differs from row count");
  const std::size_t c = data.dim(1);
  const auto n = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  nn::Tensorf out({n, c});
  std::size_t r = 0;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) std::copy_n(data.data() + i * c, c, out.data() + (r++) * c);
  return out;
}

struct MaskedSequence {
  EmbeddingSequence sequence;
  std::vector<bool> mask;
};

/// The sequence together with the mask of rows that enter K/V construction.
inline MaskedSequence apply_padding_pattern(const EmbeddingSequence& w, PaddingPattern p) {
  return {w, padding_mask(w.source_tokens, p)};
}

}  // namespace sdg::align
