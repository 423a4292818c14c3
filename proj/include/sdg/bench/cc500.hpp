#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "sdg/core/error.hpp"
#include "sdg/core/rng.hpp"

namespace sdg::bench {

/// Non-empty, trimmed lines of a lexicon or prompt file.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

inline std::string article_for(const std::string& word) {
  return !word.empty() && std::string("aeiou").find(word[0]) != std::string::npos ? "an" : "a";
}

/// "a {colorA} {objectA} and a {colorB} {objectB}" with colorA != colorB and
/// objectA != objectB. The combinations are enumerated in lexicon order, then
/// shuffled with a seeded Fisher-Yates pass; the first n are returned.
inline std::vector<std::string> generate_cc500(const std::vector<std::string>& colors,
                                               const std::vector<std::string>& objects, std::size_t n = 500,
                                               std::uint64_t seed = 0, bool use_an = false) {
  std::vector<std::string> all;
  for (const auto& ca : colors)
    for (const auto& oa : objects)
      for (const auto& cb : colors)
        for (const auto& ob : objects) {
          if (ca == cb || oa == ob) continue;
          const auto art = [&](const std::string& w) { return use_an ? article_for(w) : std::string("a"); };
          all.push_back(art(ca) + " " + ca + " " + oa + " and " + art(cb) + " " + cb + " " + ob);
        }
  require(all.size() >= n, ErrorCode::InsufficientCombinations,
          std::to_string(all.size()) + " colour/object combinations, " + std::to_string(n) + " requested");
  Rng rng(derive_seed(seed, 0xcc500));
  for (std::size_t i = all.size(); i-- > 1;) std::swap(all[i], all[rng.below(i + 1)]);
  all.resize(n);
  return all;
}

}  // namespace sdg::bench
