#pragma once

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/prompt/tokenizer.hpp"
#include "sdg/prompt/vocabulary.hpp"

namespace sdg::bench {

/// Caption pair differing only by two swapped colour words at word indices i < j
/// of the normalized caption.
struct ContrastPair {
  std::string original;
  std::string swapped;
  std::size_t i = 0, j = 0;

  friend bool operator==(const ContrastPair&, const ContrastPair&) = default;
};

struct ContrastSet {
  std::vector<ContrastPair> pairs;
  std::size_t skipped = 0;     // captions without two qualifying colour words
  std::size_t duplicates = 0;  // captions whose pair was already emitted
};

/// Word positions of colour words directly followed by a noun.
inline std::vector<std::size_t> qualifying_colors(const std::vector<std::string>& words,
                                                  const std::set<std::string>& colors,
                                                  const prompt::Vocabulary& vocab) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k + 1 < words.size(); ++k)
    if (colors.count(words[k]) && vocab.contains(words[k + 1]) &&
        vocab.pos(vocab.id(words[k + 1])) == prompt::Pos::Noun)
      out.push_back(k);
  return out;
}

/// Swaps the first qualifying colour word with the next qualifying one that
/// names a different colour. A caption and its swapped form build the same
/// unordered pair, so only the first of them is kept.
inline ContrastSet build_abc_contrast(const std::vector<std::string>& captions,
                                      const std::vector<std::string>& color_lexicon,
                                      const prompt::Vocabulary& vocab) {
  const std::set<std::string> colors(color_lexicon.begin(), color_lexicon.end());
  ContrastSet out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& caption : captions) {
    auto words = prompt::normalize_words(caption);
    const auto q = qualifying_colors(words, colors, vocab);
    std::size_t i = 0, j = 0;
    bool ok = false;
    for (std::size_t b = 1; b < q.size() && !ok; ++b)
      if (words[q[b]] != words[q[0]]) {
        i = q[0];
        j = q[b];
        ok = true;
      }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    ContrastPair p;
    p.original = prompt::join_words(words);
    std::swap(words[i], words[j]);
    p.swapped = prompt::join_words(words);
    p.i = i;
    p.j = j;
    const auto key = std::minmax(p.original, p.swapped);
    if (!seen.insert({key.first, key.second}).second) {
      ++out.duplicates;
      continue;
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

/// The two captions differ exactly at i and j, and both words there are colours.
inline bool satisfies_invariant(const ContrastPair& p, const std::vector<std::string>& color_lexicon) {
  const auto a = prompt::normalize_words(p.original), b = prompt::normalize_words(p.swapped);
  if (a.size() != b.size() || p.i >= p.j || p.j >= a.size()) return false;
  const std::set<std::string> colors(color_lexicon.begin(), color_lexicon.end());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool differs = a[k] != b[k];
    if (differs != (k == p.i || k == p.j)) return false;
  }
  return colors.count(a[p.i]) && colors.count(a[p.j]) && a[p.i] == b[p.j] && a[p.j] == b[p.i];
}

inline std::string format_pair(const ContrastPair& p) {
  std::ostringstream os;
  os << p.original << '\t' << p.swapped << '\t' << p.i << '\t' << p.j;
  return os.str();
}

}  // namespace sdg::bench
