#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdg/core/error.hpp"

namespace sdg {

/// Flat `key = value` configuration. `#` starts a comment; later assignments win.
class KvConfig {
 public:
  static KvConfig parse(std::istream& is, const std::string& origin = "<config>") {
    KvConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      require(eq != std::string::npos, ErrorCode::SyntaxError,
              origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      require(!key.empty(), ErrorCode::SyntaxError,
              origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = trim(trimmed.substr(eq + 1));
    }
    return cfg;
  }

  static KvConfig load(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open config " + path);
    return parse(in, path);
  }

  static KvConfig from_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// Assigns keys from `other` over this config.
  void merge(const KvConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string get(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorCode::InvalidConfig, "missing config key " + key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, get(key)) : fallback;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? to_int(key, get(key)) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorCode::InvalidConfig, "key " + key + " expects a boolean, got '" + v + "'");
  }
  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos == v.size()) return d;
    } catch (...) {
    }
    fail(ErrorCode::InvalidConfig, "key " + key + " expects a number, got '" + v + "'");
  }
  static long long to_int(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const long long d = std::stoll(v, &pos);
      if (pos == v.size()) return d;
    } catch (...) {
    }
    fail(ErrorCode::InvalidConfig, "key " + key + " expects an integer, got '" + v + "'");
  }

  std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a, used for config digests.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sdg
