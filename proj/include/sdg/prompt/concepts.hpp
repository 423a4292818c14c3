#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/prompt/parse_tree.hpp"
#include "sdg/prompt/scene_graph.hpp"
#include "sdg/prompt/tokenizer.hpp"
#include "sdg/prompt/vocabulary.hpp"

namespace sdg::prompt {

/// A concept and its location in the full prompt: [token_start, token_end)
/// indexes TokenSequence::ids, so the first content token is index 1.
struct ConceptSpan {
  std::string text;
  std::size_t token_start = 0;
  std::size_t token_end = 0;

  std::size_t length() const noexcept { return token_end - token_start; }

  friend bool operator==(const ConceptSpan&, const ConceptSpan&) = default;
};

inline constexpr std::size_t kMaxConcepts = 8;

/// Leftmost occurrence of `span_text` in `full` whose start is not in `used`;
/// the start is then added to `used`.
inline ConceptSpan locate_span(std::string_view span_text, const TokenSequence& full,
                               const Vocabulary& vocab, std::set<std::size_t>& used) {
  const auto needle = content_ids(span_text, vocab);
  require(!needle.empty(), ErrorCode::SpanNotFound, "empty span");
  if (needle.size() <= full.content_len) {
    for (std::size_t start = 1; start + needle.size() <= full.content_len + 1; ++start) {
      if (used.count(start)) continue;
      if (std::equal(needle.begin(), needle.end(), full.ids.begin() + static_cast<long>(start))) {
        used.insert(start);
        return ConceptSpan{std::string(span_text), start, start + needle.size()};
      }
    }
  }
  fail(ErrorCode::SpanNotFound, "span '" + std::string(span_text) + "' not found in prompt '" +
                                    detokenize(full, vocab) + "'");
}

/// Maximal left-to-right matches of DET? ADJ* NOUN+ over the POS lexicon.
inline std::vector<ConceptSpan> chunk_noun_phrases(const TokenSequence& tokens,
                                                   const Vocabulary& vocab) {
  std::vector<ConceptSpan> spans;
  const std::size_t end = tokens.content_len + 1;
  auto tag = [&](std::size_t i) { return vocab.pos(tokens.ids[i]); };
  std::size_t i = 1;
  while (i < end) {
    std::size_t j = i;
    if (tag(j) == Pos::Det) ++j;
    while (j < end && tag(j) == Pos::Adj) ++j;
    const std::size_t noun_start = j;
    while (j < end && tag(j) == Pos::Noun) ++j;
    if (j > noun_start) {
      std::string text;
      for (std::size_t k = i; k < j; ++k) {
        if (k > i) text.push_back(' ');
        text += vocab.token(tokens.ids[k]);
      }
      spans.push_back({std::move(text), i, j});
      i = j;
    } else {
      ++i;
    }
  }
  return spans;
}

enum class ParserSource { Chunker, Tree, SceneGraph };

struct ConceptSet {
  std::vector<ConceptSpan> spans;
  std::size_t dropped = 0;
};

/// Locates each text in order (duplicates get successive occurrences) and
/// keeps at most `max_concepts`.
inline ConceptSet locate_concepts(const std::vector<std::string>& texts, const TokenSequence& full,
                                  const Vocabulary& vocab,
                                  std::size_t max_concepts = kMaxConcepts) {
  ConceptSet set;
  // Occurrence bookkeeping is per distinct text: two different phrases may
  // legitimately start at the same token.
  std::vector<std::pair<std::string, std::set<std::size_t>>> used_by_text;
  for (const auto& t : texts) {
    if (set.spans.size() == max_concepts) {
      ++set.dropped;
      continue;
    }
    const auto key = join_words(normalize_words(t));
    auto it = std::find_if(used_by_text.begin(), used_by_text.end(),
                           [&](const auto& p) { return p.first == key; });
    if (it == used_by_text.end()) {
      used_by_text.emplace_back(key, std::set<std::size_t>{});
      it = std::prev(used_by_text.end());
    }
    set.spans.push_back(locate_span(t, full, vocab, it->second));
  }
  return set;
}

inline ConceptSet apply_cap(std::vector<ConceptSpan> spans, std::size_t max_concepts = kMaxConcepts) {
  ConceptSet set;
  if (spans.size() > max_concepts) {
    set.dropped = spans.size() - max_concepts;
    spans.resize(max_concepts);
  }
  set.spans = std::move(spans);
  return set;
}

}  // namespace sdg::prompt
