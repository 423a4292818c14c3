#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/prompt/tokenizer.hpp"

namespace sdg::prompt {

struct SceneEntity {
  std::vector<std::string> attributes;
  std::string head;

  std::string text() const {
    std::string out;
    for (const auto& a : attributes) out += a + ' ';
    return out + head;
  }
};

struct SceneRelation {
  std::size_t subject = 0;
  std::vector<std::string> predicate;
  std::size_t object = 0;
};

struct SceneGraph {
  std::vector<SceneEntity> entities;
  std::vector<SceneRelation> relations;
};

inline void validate(const SceneGraph& graph) {
  for (const auto& r : graph.relations)
    require(r.subject < graph.entities.size() && r.object < graph.entities.size(),
            ErrorCode::DanglingRelation,
            "relation references entity " +
                std::to_string(std::max(r.subject, r.object)) + " of " +
                std::to_string(graph.entities.size()));
}

/// One span per attributed entity (attributes + head), then one per relation
/// (subject span, predicate, object span). A bare head noun adds no entity
/// span but still takes part in relations.
inline std::vector<std::string> extract_scene_graph_spans(const SceneGraph& graph) {
  validate(graph);
  std::vector<std::string> spans;
  for (const auto& e : graph.entities)
    if (!e.attributes.empty()) spans.push_back(e.text());
  for (const auto& r : graph.relations) {
    std::string s = graph.entities[r.subject].text();
    for (const auto& w : r.predicate) s += ' ' + w;
    s += ' ' + graph.entities[r.object].text();
    spans.push_back(std::move(s));
  }
  return spans;
}

/// Line records: `E <id> <attr>* <head>` and `R <subj-id> <pred words...> <obj-id>`.
/// Blank lines and `#` comments are ignored. Entity ids are arbitrary
/// non-negative integers; they are renumbered in declaration order.
inline SceneGraph parse_scene_graph(std::istream& is, const std::string& origin = "<graph>") {
  SceneGraph graph;
  std::map<long long, std::size_t> ids;
  struct PendingRelation {
    long long subject, object;
    std::vector<std::string> predicate;
    std::size_t line;
  };
  std::vector<PendingRelation> pending;
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
  auto parse_id = [&](const std::string& tok) -> long long {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      if (used == tok.size() && v >= 0) return v;
    } catch (...) {
    }
    fail(ErrorCode::SyntaxError, where() + "expected an entity id, got '" + tok + "'");
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    if (toks[0] == "E") {
      require(toks.size() >= 3, ErrorCode::SyntaxError, where() + "entity needs an id and a head");
      const long long id = parse_id(toks[1]);
      require(!ids.count(id), ErrorCode::SyntaxError,
              where() + "duplicate entity id " + std::to_string(id));
      ids[id] = graph.entities.size();
      SceneEntity e;
      e.attributes.assign(toks.begin() + 2, toks.end() - 1);
      e.head = toks.back();
      graph.entities.push_back(std::move(e));
    } else if (toks[0] == "R") {
      require(toks.size() >= 4, ErrorCode::SyntaxError,
              where() + "relation needs subject, predicate and object");
      pending.push_back({parse_id(toks[1]), parse_id(toks.back()),
                         std::vector<std::string>(toks.begin() + 2, toks.end() - 1), lineno});
    } else {
      fail(ErrorCode::SyntaxError, where() + "unknown record type '" + toks[0] + "'");
    }
  }
  for (auto& p : pending) {
    const auto s = ids.find(p.subject), o = ids.find(p.object);
    require(s != ids.end() && o != ids.end(), ErrorCode::DanglingRelation,
            origin + ":" + std::to_string(p.line) + ": relation references unknown entity");
    graph.relations.push_back({s->second, std::move(p.predicate), o->second});
  }
  return graph;
}

inline std::string to_graph_text(const SceneGraph& graph) {
  std::ostringstream os;
  for (std::size_t i = 0; i < graph.entities.size(); ++i) {
    os << "E " << i;
    for (const auto& a : graph.entities[i].attributes) os << ' ' << a;
    os << ' ' << graph.entities[i].head << '\n';
  }
  for (const auto& r : graph.relations) {
    os << "R " << r.subject;
    for (const auto& w : r.predicate) os << ' ' << w;
    os << ' ' << r.object << '\n';
  }
  return os.str();
}

/// Every entity's words must appear contiguously in the prompt, attributes
/// before the head.
inline void check_entities(const SceneGraph& graph, std::string_view prompt) {
  const auto words = normalize_words(prompt);
  for (const auto& e : graph.entities) {
    const auto span = normalize_words(e.text());
    const auto it = std::search(words.begin(), words.end(), span.begin(), span.end());
    require(!span.empty() && it != words.end(), ErrorCode::LeafMismatch,
            "entity '" + e.text() + "' does not occur in prompt '" + join_words(words) + "'");
  }
}

inline SceneGraph load_scene_graph(const std::string& path,
                                   std::optional<std::string_view> prompt = std::nullopt) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open scene graph " + path);
  SceneGraph graph = parse_scene_graph(in, path);
  validate(graph);
  if (prompt) check_entities(graph, *prompt);
  return graph;
}

}  // namespace sdg::prompt
