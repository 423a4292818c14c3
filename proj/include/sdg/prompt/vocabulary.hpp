#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdg/core/error.hpp"

namespace sdg::prompt {

enum class Pos { Det, Adj, Noun, Verb, Prep, Conj, Other };

inline std::string_view to_string(Pos pos) {
  switch (pos) {
    case Pos::Det: return "DET";
    case Pos::Adj: return "ADJ";
    case Pos::Noun: return "NOUN";
    case Pos::Verb: return "VERB";
    case Pos::Prep: return "PREP";
    case Pos::Conj: return "CONJ";
    case Pos::Other: return "OTHER";
  }
  return "OTHER";
}

inline Pos parse_pos(std::string_view tag) {
  if (tag == "DET") return Pos::Det;
  if (tag == "ADJ") return Pos::Adj;
  if (tag == "NOUN") return Pos::Noun;
  if (tag == "VERB") return Pos::Verb;
  if (tag == "PREP") return Pos::Prep;
  if (tag == "CONJ") return Pos::Conj;
  if (tag == "OTHER") return Pos::Other;
  fail(ErrorCode::SyntaxError, "unknown POS tag '" + std::string(tag) + "'");
}

inline constexpr std::string_view kBos = "<bos>";
inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kUnk = "<unk>";

/// Word-level vocabulary with a static POS lexicon. Ids 0..2 are always
/// bos/eos/pad; `<unk>` is appended when the source does not list it.
class Vocabulary {
 public:
  struct Entry {
    std::string token;
    Pos pos = Pos::Other;
  };

  static Vocabulary from_entries(std::vector<Entry> entries) {
    require(entries.size() >= 3 && entries[0].token == kBos && entries[1].token == kEos &&
                entries[2].token == kPad,
            ErrorCode::SyntaxError, "vocabulary must start with <bos>, <eos>, <pad>");
    Vocabulary v;
    for (auto& e : entries) {
      require(!e.token.empty(), ErrorCode::SyntaxError, "empty vocabulary token");
      const auto [it, inserted] = v.index_.emplace(e.token, static_cast<int>(v.entries_.size()));
      require(inserted, ErrorCode::SyntaxError, "duplicate vocabulary token '" + e.token + "'");
      v.entries_.push_back(std::move(e));
    }
    if (!v.index_.count(std::string(kUnk))) {
      v.index_.emplace(std::string(kUnk), static_cast<int>(v.entries_.size()));
      v.entries_.push_back({std::string(kUnk), Pos::Other});
    }
    v.unk_ = v.index_.at(std::string(kUnk));
    v.entries_[v.unk_].pos = Pos::Other;
    return v;
  }

  /// `token<TAB>POS` per line; the POS column may be omitted (OTHER).
  static Vocabulary parse(std::istream& is, const std::string& origin = "<vocab>") {
    std::vector<Entry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      Entry e;
      e.token = line.substr(0, tab);
      if (tab != std::string::npos) {
        try {
          e.pos = parse_pos(line.substr(tab + 1));
        } catch (const Error& err) {
          fail(ErrorCode::SyntaxError, origin + ":" + std::to_string(lineno) + ": " + err.what());
        }
      }
      entries.push_back(std::move(e));
    }
    return from_entries(std::move(entries));
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open vocabulary " + path);
    return parse(in, path);
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& e : entries_) os << e.token << '\t' << to_string(e.pos) << '\n';
    return os.str();
  }

  int bos() const noexcept { return 0; }
  int eos() const noexcept { return 1; }
  int pad() const noexcept { return 2; }
  int unk() const noexcept { return unk_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool is_special(int id) const noexcept { return id == bos() || id == eos() || id == pad(); }

  /// Total: unknown words map to `<unk>`.
  int id(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    return it == index_.end() ? unk_ : it->second;
  }

  bool contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

  const std::string& token(int id) const { return entries_.at(static_cast<std::size_t>(id)).token; }
  Pos pos(int id) const { return entries_.at(static_cast<std::size_t>(id)).pos; }

  /// Tokens tagged with `pos`, in id order.
  std::vector<std::string> words_with(Pos pos) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.pos == pos) out.push_back(e.token);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
  int unk_ = 3;
};

}  // namespace sdg::prompt
