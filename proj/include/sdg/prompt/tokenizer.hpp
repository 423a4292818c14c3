#pragma once

#include <array>
#include <cctype>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/prompt/vocabulary.hpp"

namespace sdg::prompt {

inline constexpr std::size_t kSequenceLength = 77;
inline constexpr std::size_t kMaxContentTokens = kSequenceLength - 2;

/// [bos, content..., eos, pad...] with exactly kSequenceLength ids.
struct TokenSequence {
  std::array<int, kSequenceLength> ids{};
  std::size_t content_len = 0;

  std::span<const int> content() const { return std::span<const int>(ids).subspan(1, content_len); }
  std::size_t eos_index() const { return content_len + 1; }
  /// Index of the first pad (the "nearest" padding token).
  std::size_t first_pad_index() const { return content_len + 2; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Lowercases and splits on whitespace and punctuation; punctuation is dropped.
inline std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

inline std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

/// Content ids only, no specials and no length limit.
inline std::vector<int> content_ids(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : normalize_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

inline TokenSequence make_sequence(std::span<const int> content, const Vocabulary& vocab) {
  require(content.size() <= kMaxContentTokens, ErrorCode::PromptTooLong,
          std::to_string(content.size()) + " content tokens exceed the limit of " +
              std::to_string(kMaxContentTokens));
  TokenSequence seq;
  seq.ids.fill(vocab.pad());
  seq.ids[0] = vocab.bos();
  for (std::size_t i = 0; i < content.size(); ++i) seq.ids[i + 1] = content[i];
  seq.ids[content.size() + 1] = vocab.eos();
  seq.content_len = content.size();
  return seq;
}

inline TokenSequence tokenize(std::string_view prompt, const Vocabulary& vocab) {
  const auto ids = content_ids(prompt, vocab);
  require(!ids.empty(), ErrorCode::PromptTooShort, "prompt has no tokens after normalization");
  return make_sequence(ids, vocab);
}

/// The unconditional sequence [bos, eos, pad...].
inline TokenSequence empty_sequence(const Vocabulary& vocab) { return make_sequence({}, vocab); }

inline std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.content_len; ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(seq.ids[i + 1]);
  }
  return out;
}

}  // namespace sdg::prompt
