#pragma once

// Flat `key = value` text files with optional `[section]` headers.
// Used for run configs and for ModelParams files.

#include <charconv>
#include <cstdlib>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pushnpg {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class KvFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KvFile parse(std::string_view text, const std::string& origin = "<string>") {
    KvFile kv;
    kv.origin_ = origin;
    std::string section;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      auto hash = raw.find('#');
      std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3)
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header '" + line + "'");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      std::string full = section.empty() ? key : section + "." + key;
      if (kv.entries_.count(full))
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + full + "'");
      kv.entries_[full] = Entry{value, line_no};
      kv.order_.push_back(full);
    }
    return kv;
  }

  static KvFile load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const std::vector<std::string>& keys() const { return order_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  std::string require_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
    return it->second.value;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return to_double(it->first, it->second);
  }

  double require_double(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
    return to_double(it->first, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const auto& v = it->second.value;
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw ConfigError(where(it->second) + ": '" + key + "' expects an integer, got '" + v + "'");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const auto& v = it->second.value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where(it->second) + ": '" + key + "' expects a boolean, got '" + v + "'");
  }

  int line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  const std::string& origin() const { return origin_; }

  /// Throws on any key outside `sections` or not in `known`.
  void reject_unknown(const std::vector<std::string>& sections, const std::vector<std::string>& known) const {
    for (const auto& k : order_) {
      auto dot = k.find('.');
      std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
      bool in_scope = false;
      for (const auto& s : sections) in_scope |= (s == sec);
      if (!in_scope) throw ConfigError(where(entries_.at(k)) + ": unknown section '[" + sec + "]'");
      bool ok = false;
      for (const auto& kn : known) ok |= (kn == k);
      if (!ok) throw ConfigError(where(entries_.at(k)) + ": unknown key '" + k + "'");
    }
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::string where(const Entry& e) const { return origin_ + ":" + std::to_string(e.line); }

  double to_double(const std::string& key, const Entry& e) const {
    // strtod accepts the full round-trip %.17g form, including exponents.
    const char* begin = e.value.c_str();
    char* end = nullptr;
    double out = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
      throw ConfigError(where(e) + ": '" + key + "' expects a number, got '" + e.value + "'");
    return out;
  }

  std::string origin_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Shortest text form that parses back to the identical double.
inline std::string format_exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace pushnpg
