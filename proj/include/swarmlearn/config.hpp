#pragma once

// Flat typed key-value configuration:
//
//   # comment
//   int n = 2
//   real lambda = 1.0
//   string family = quadratic
//   list methods = meta, gd, pso
//   bool log_wall_time = false
//   u64 seed = 7
//
// Every lookup supplies a default and is echoed into the resolved
// configuration; keys present in the file but never looked up are errors.

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "swarmlearn/errors.hpp"
#include "swarmlearn/objectives.hpp"

namespace swarmlearn {

class Config {
 public:
  static Config parse(std::string_view text) {
    Config c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw error(line_no, "expected '<type> <key> = <value>'");
      const std::string_view lhs = trim(line.substr(0, eq));
      const std::string_view value = trim(line.substr(eq + 1));
      const std::size_t space = lhs.find_first_of(" \t");
      if (space == std::string_view::npos) throw error(line_no, "missing type before key");
      const std::string type(trim(lhs.substr(0, space)));
      const std::string key(trim(lhs.substr(space + 1)));
      if (!known_type(type)) throw error(line_no, "unknown type '" + type + "'");
      if (key.empty() || key.find_first_of(" \t") != std::string::npos) throw error(line_no, "malformed key");
      if (c.entries_.count(key)) throw error(line_no, "duplicate key '" + key + "'");
      c.entries_[key] = {type, std::string(value), line_no};
    }
    return c;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    const Entry* e = lookup(key, "int");
    const std::int64_t v = e ? parse_int(*e, key) : fallback;
    resolved_[key] = "int " + key + " = " + std::to_string(v);
    return v;
  }

  /// Non-negative integer with a lower bound.
  std::size_t get_count(const std::string& key, std::size_t fallback, std::size_t min = 0) {
    const std::int64_t v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < static_cast<std::int64_t>(min)) {
      throw config_error("key '" + key + "' must be at least " + std::to_string(min) + ", got " + std::to_string(v));
    }
    return static_cast<std::size_t>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const Entry* e = lookup(key, "u64");
    std::uint64_t v = fallback;
    if (e) {
      const auto res = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
      if (res.ec != std::errc() || res.ptr != e->value.data() + e->value.size()) throw bad_value(*e, key);
    }
    resolved_[key] = "u64 " + key + " = " + std::to_string(v);
    return v;
  }

  /// Replaces a value from the command line; the key counts as used.
  void override_u64(const std::string& key, std::uint64_t value) {
    used_.insert(key);
    resolved_[key] = "u64 " + key + " = " + std::to_string(value);
  }

  double get_real(const std::string& key, double fallback) {
    const Entry* e = lookup(key, "real");
    double v = fallback;
    if (e) {
      try {
        v = detail::parse_real(e->value);
      } catch (const config_error&) {
        throw bad_value(*e, key);
      }
    }
    resolved_[key] = "real " + key + " = " + detail::format_real(v);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const Entry* e = lookup(key, "bool");
    bool v = fallback;
    if (e) {
      if (e->value == "true") v = true;
      else if (e->value == "false") v = false;
      else throw bad_value(*e, key);
    }
    resolved_[key] = std::string("bool ") + key + " = " + (v ? "true" : "false");
    return v;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const Entry* e = lookup(key, "string");
    const std::string v = e ? e->value : fallback;
    resolved_[key] = "string " + key + " = " + v;
    return v;
  }

  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) {
    const Entry* e = lookup(key, "list");
    std::vector<std::string> v = fallback;
    if (e) {
      v.clear();
      std::size_t start = 0;
      const std::string& s = e->value;
      while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::string_view item =
            trim(std::string_view(s).substr(start, comma == std::string::npos ? s.size() - start : comma - start));
        if (!item.empty()) v.emplace_back(item);
        start = comma == std::string::npos ? s.size() + 1 : comma + 1;
      }
    }
    std::string joined;
    for (std::size_t i = 0; i < v.size(); ++i) joined += (i ? ", " : "") + v[i];
    resolved_[key] = "list " + key + " = " + joined;
    return v;
  }

  std::vector<double> get_real_list(const std::string& key, const std::vector<double>& fallback) {
    std::vector<std::string> defaults;
    for (double d : fallback) defaults.push_back(detail::format_real(d));
    std::vector<double> out;
    for (const std::string& s : get_list(key, defaults)) {
      try {
        out.push_back(detail::parse_real(s));
      } catch (const config_error&) {
        throw config_error("key '" + key + "' holds a non-numeric entry '" + s + "'");
      }
    }
    return out;
  }

  /// Rejects keys that were never looked up.
  void check_unused() const {
    for (const auto& [key, e] : entries_) {
      if (!used_.count(key)) {
        throw config_error("unknown config key '" + key + "' (line " + std::to_string(e.line) + ")");
      }
    }
  }

  std::string resolved_text() const {
    std::string out;
    for (const auto& [key, line] : resolved_) out += line + "\n";
    return out;
  }

 private:
  struct Entry {
    std::string type;
    std::string value;
    std::size_t line = 0;
  };

  static bool known_type(const std::string& t) {
    return t == "int" || t == "real" || t == "string" || t == "list" || t == "bool" || t == "u64";
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static config_error error(std::size_t line, const std::string& what) {
    return config_error("config line " + std::to_string(line) + ": " + what);
  }

  static config_error bad_value(const Entry& e, const std::string& key) {
    return config_error("config line " + std::to_string(e.line) + ": '" + e.value + "' is not a valid " + e.type +
                        " for key '" + key + "'");
  }

  static std::int64_t parse_int(const Entry& e, const std::string& key) {
    std::int64_t v = 0;
    const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size()) throw bad_value(e, key);
    return v;
  }

  const Entry* lookup(const std::string& key, const char* type) {
    used_.insert(key);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    if (it->second.type != type) {
      throw config_error("config line " + std::to_string(it->second.line) + ": key '" + key + "' must have type " +
                         type + ", declared " + it->second.type);
    }
    return &it->second;
  }

  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
  std::map<std::string, std::string> resolved_;
};

}  // namespace swarmlearn
