// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "dcpeval/error.hpp"
#include "dcpeval/io.hpp"

namespace dcpeval {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Every key must be consumed by the command that reads the file; leftovers
/// are reported as typos via `check_all_used`.
class FlatConfig {
 public:
  FlatConfig() = default;

  static FlatConfig parse(std::string_view text, std::string_view origin = "<config>") {
    FlatConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = trim(text.substr(pos, end - pos));
      ++line_no;
      pos = end + 1;
      if (line.empty() || line.front() == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
      }
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
      }
      if (cfg.values_.contains(key)) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
      cfg.values_.emplace(std::move(key), std::move(value));
      if (end == text.size()) break;
    }
    return cfg;
  }

  static FlatConfig load(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
    return parse(read_file(path), path.string());
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
    return it->second;
  }

  long long get_int(const std::string& key, long long fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    const std::string& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
    }
    return v;
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t consumed = 0;
      double v = std::stod(it->second, &consumed);
      if (consumed != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "' expects true/false, got '" + it->second + "'");
  }

  void check_all_used() const {
    for (const auto& [k, v] : values_) {
      if (!used_.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  /// Canonical `key=value` lines in key order; input to the config hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  std::string hash() const { return hex64(fnv1a(canonical())); }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace dcpeval
