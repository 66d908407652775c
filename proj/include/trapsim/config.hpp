#pragma once

// Flat TOML-style configuration documents:
//
//   # comment
//   experiment = "hydro"
//   output = "out/hydro"
//   [params]
//   N = [64, 256]
//   gamma = 1.0
//   bouchaud = false
//
// Sections flatten into dotted keys ("params.N"). Values are strings,
// numbers, booleans, or one-level arrays of those. Nothing fancier: no
// nested tables, no multi-line strings, no datetimes.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace trapsim {

struct ConfigValue {
  enum class Kind { str, num, boolean, list };
  Kind kind = Kind::str;
  std::string s;
  double n = 0.0;
  bool b = false;
  std::vector<ConfigValue> items;
  int line = 0;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] inline void fail(int line, const std::string& msg) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

// strips an unquoted trailing comment
inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

inline ConfigValue parse_scalar(const std::string& text, int line) {
  ConfigValue v;
  v.line = line;
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    std::string body = text.substr(1, text.size() - 2);
    if (body.find('"') != std::string::npos) fail(line, "stray quote inside string");
    v.kind = ConfigValue::Kind::str;
    v.s = body;
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = ConfigValue::Kind::boolean;
    v.b = text == "true";
    return v;
  }
  try {
    std::size_t used = 0;
    double d = std::stod(text, &used);
    if (used == text.size() && std::isfinite(d)) {
      v.kind = ConfigValue::Kind::num;
      v.n = d;
      return v;
    }
  } catch (const std::exception&) {
  }
  fail(line, "cannot parse value '" + text + "'");
}

inline ConfigValue parse_value(const std::string& text, int line) {
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') fail(line, "unterminated array");
    ConfigValue v;
    v.kind = ConfigValue::Kind::list;
    v.line = line;
    std::string body = trim(text.substr(1, text.size() - 2));
    if (body.empty()) return v;
    std::vector<std::string> parts;
    bool quoted = false;
    std::string cur;
    for (char c : body) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
    for (const std::string& p : parts) {
      std::string item = trim(p);
      if (item.empty()) fail(line, "empty array element");
      v.items.push_back(parse_scalar(item, line));
    }
    return v;
  }
  return parse_scalar(text, line);
}

}  // namespace config_detail

class Config {
 public:
  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      std::string s = config_detail::trim(config_detail::strip_comment(raw));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') config_detail::fail(line, "unterminated section header");
        section = config_detail::trim(s.substr(1, s.size() - 2));
        if (!config_detail::valid_key(section))
          config_detail::fail(line, "bad section name '" + section + "'");
        continue;
      }
      std::size_t eq = std::string::npos;
      bool quoted = false;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '=' && !quoted) {
          eq = i;
          break;
        }
      }
      if (eq == std::string::npos) config_detail::fail(line, "expected key = value");
      std::string key = config_detail::trim(s.substr(0, eq));
      std::string val = config_detail::trim(s.substr(eq + 1));
      if (!config_detail::valid_key(key))
        config_detail::fail(line, "bad key '" + key + "'");
      if (val.empty()) config_detail::fail(line, "missing value for '" + key + "'");
      std::string full = section.empty() ? key : section + "." + key;
      if (c.kv_.count(full)) config_detail::fail(line, "duplicate key '" + full + "'");
      c.kv_.emplace(full, config_detail::parse_value(val, line));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_) out.push_back(k);
    return out;
  }

  std::string get_string(const std::string& key) const {
    const ConfigValue& v = require(key);
    if (v.kind != ConfigValue::Kind::str) wrong_type(key, "a string");
    return v.s;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
  }

  bool get_bool(const std::string& key) const {
    const ConfigValue& v = require(key);
    if (v.kind != ConfigValue::Kind::boolean) wrong_type(key, "a boolean");
    return v.b;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
  }

  double get_double(const std::string& key) const {
    const ConfigValue& v = require(key);
    if (v.kind != ConfigValue::Kind::num) wrong_type(key, "a number");
    return v.n;
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long long get_int(const std::string& key) const { return to_int(require(key), key); }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    const ConfigValue& v = require(key);
    std::vector<double> out;
    for (const ConfigValue& item : list_of(v, key)) {
      if (item.kind != ConfigValue::Kind::num) wrong_type(key, "a list of numbers");
      out.push_back(item.n);
    }
    return out;
  }

  std::vector<long long> get_int_list(const std::string& key) const {
    const ConfigValue& v = require(key);
    std::vector<long long> out;
    for (const ConfigValue& item : list_of(v, key)) out.push_back(to_int(item, key));
    return out;
  }

  const std::map<std::string, ConfigValue>& entries() const { return kv_; }

 private:
  std::map<std::string, ConfigValue> kv_;

  const ConfigValue& require(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second;
  }

  [[noreturn]] static void wrong_type(const std::string& key, const char* want) {
    throw std::runtime_error("config: key '" + key + "' must be " + want);
  }

  static const std::vector<ConfigValue>& list_of(const ConfigValue& v,
                                                 const std::string& key) {
    if (v.kind != ConfigValue::Kind::list) wrong_type(key, "a list");
    return v.items;
  }

  static long long to_int(const ConfigValue& v, const std::string& key) {
    if (v.kind != ConfigValue::Kind::num) wrong_type(key, "an integer");
    if (std::floor(v.n) != v.n || std::fabs(v.n) > 9.007199254740992e15)
      wrong_type(key, "an integer");
    return static_cast<long long>(v.n);
  }
};

}  // namespace trapsim
