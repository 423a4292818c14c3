#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/prompt/tokenizer.hpp"

namespace sdg::prompt {

/// Constituency tree. A leaf carries a word and no label; every other node
/// carries a label and at least one child.
struct ParseTree {
  std::string label;
  std::string word;
  std::vector<ParseTree> children;

  static ParseTree leaf(std::string w) { return ParseTree{"", std::move(w), {}}; }
  static ParseTree node(std::string l, std::vector<ParseTree> kids) {
    return ParseTree{std::move(l), "", std::move(kids)};
  }

  bool is_leaf() const noexcept { return label.empty(); }

  friend bool operator==(const ParseTree&, const ParseTree&) = default;
};

inline void collect_leaves(const ParseTree& tree, std::vector<std::string>& out) {
  if (tree.is_leaf()) {
    out.push_back(tree.word);
    return;
  }
  for (const auto& c : tree.children) collect_leaves(c, out);
}

inline std::vector<std::string> leaves(const ParseTree& tree) {
  std::vector<std::string> out;
  collect_leaves(tree, out);
  return out;
}

inline void validate(const ParseTree& tree) {
  if (tree.is_leaf()) {
    require(!tree.word.empty(), ErrorCode::MalformedTree, "leaf without a word");
    return;
  }
  require(!tree.children.empty(), ErrorCode::MalformedTree,
          "node '" + tree.label + "' has no children");
  for (const auto& c : tree.children) validate(c);
}

inline void write_sexpr(const ParseTree& tree, std::string& out) {
  if (tree.is_leaf()) {
    out += tree.word;
    return;
  }
  out.push_back('(');
  out += tree.label;
  for (const auto& c : tree.children) {
    out.push_back(' ');
    write_sexpr(c, out);
  }
  out.push_back(')');
}

inline std::string to_sexpr(const ParseTree& tree) {
  std::string out;
  write_sexpr(tree, out);
  return out;
}

namespace detail {

class SexprReader {
 public:
  explicit SexprReader(std::string_view text) : text_(text) {}

  ParseTree read_document() {
    skip_space();
    expect('(');
    ParseTree tree = read_node();
    skip_space();
    if (pos_ != text_.size()) error("trailing content after tree");
    return tree;
  }

 private:
  ParseTree read_node() {
    // '(' already consumed.
    skip_space();
    std::string label = read_atom();
    if (label.empty()) error("expected a constituent label");
    for (unsigned char c : label)
      if (!(std::isupper(c) || std::isdigit(c) || c == '$' || c == '-' || c == '_'))
        error("label '" + label + "' is not uppercase ASCII");
    ParseTree node = ParseTree::node(std::move(label), {});
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) error("unbalanced parentheses");
      const char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        ++pos_;
        node.children.push_back(read_node());
      } else {
        node.children.push_back(ParseTree::leaf(read_atom()));
      }
    }
    if (node.children.empty())
      fail(ErrorCode::MalformedTree, location() + ": node '" + node.label + "' has no children");
    return node;
  }

  std::string read_atom() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')')
      ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string location() const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
  }

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorCode::SyntaxError, location() + ": " + msg);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ParseTree parse_sexpr(std::string_view text) {
  return detail::SexprReader(text).read_document();
}

/// Throws LeafMismatch unless the normalized leaves equal the normalized prompt.
inline void check_leaves(const ParseTree& tree, std::string_view prompt) {
  std::vector<std::string> lv;
  for (const auto& w : leaves(tree))
    for (auto& n : normalize_words(w)) lv.push_back(std::move(n));
  const auto words = normalize_words(prompt);
  require(lv == words, ErrorCode::LeafMismatch,
          "tree leaves '" + join_words(lv) + "' do not match prompt '" + join_words(words) + "'");
}

inline ParseTree load_parse_tree(const std::string& path,
                                 std::optional<std::string_view> prompt = std::nullopt) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open tree file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ParseTree tree = parse_sexpr(ss.str());
  if (prompt) check_leaves(tree, *prompt);
  return tree;
}

/// Noun phrases of a constituency tree.
///
/// Every NP node spanning at least two leaves contributes its text; nested NPs
/// contribute both parent and child. An NP covering the whole prompt is kept
/// only when it is the sole phrase, since the full prompt is already encoded as
/// the main sequence. Phrases are ordered by word count, ties in preorder, and
/// duplicates are preserved.
inline std::vector<std::string> extract_noun_phrases(const ParseTree& tree) {
  validate(tree);
  struct Found {
    std::string text;
    std::size_t length;
  };
  std::vector<Found> found;
  const std::size_t total = leaves(tree).size();
  bool whole_is_np = false;

  auto visit = [&](auto&& self, const ParseTree& node) -> void {
    if (node.is_leaf()) return;
    if (node.label == "NP") {
      const auto words = leaves(node);
      if (words.size() == total) {
        whole_is_np = true;
      } else if (words.size() >= 2) {
        found.push_back({join_words(words), words.size()});
      }
    }
    for (const auto& c : node.children) self(self, c);
  };
  visit(visit, tree);

  std::stable_sort(found.begin(), found.end(),
                   [](const Found& a, const Found& b) { return a.length < b.length; });
  std::vector<std::string> out;
  for (auto& f : found) out.push_back(std::move(f.text));
  if (out.empty() && whole_is_np) out.push_back(join_words(leaves(tree)));
  return out;
}

}  // namespace sdg::prompt
