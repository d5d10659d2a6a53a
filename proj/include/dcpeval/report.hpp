// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "dcpeval/io.hpp"

namespace dcpeval {

inline std::string fmt_num(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, int precision = 3) {
  return v ? fmt_num(*v, precision) : std::string("n/a");
}

struct Provenance {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw Error("table '" + title + "': row width differs from header");
    rows.push_back(std::move(row));
  }

  std::string to_csv(const Provenance& p) const {
    auto cell = [](const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    };
    std::string out = "# command=" + p.command + " config_hash=" + p.config_hash + " seed=" + std::to_string(p.seed) + "\n";
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + cell(r[i]);
      out += "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

  std::string to_markdown(const Provenance& p) const {
    std::string out = "## " + title + "\n\n";
    out += "config hash `" + p.config_hash + "`, seed " + std::to_string(p.seed) + "\n\n";
    auto line = [&](const std::vector<std::string>& r) {
      out += "|";
      for (const auto& c : r) out += " " + c + " |";
      out += "\n";
    };
    line(header);
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? " :-- |" : " --: |";
    out += "\n";
    for (const auto& r : rows) line(r);
    return out;
  }
};

/// Writes `<stem>.csv` and `<stem>.md` under `dir`, each atomically.
inline void write_report(const fs::path& dir, const std::string& stem, const Table& t, const Provenance& p) {
  write_file_atomic(dir / (stem + ".csv"), t.to_csv(p));
  write_file_atomic(dir / (stem + ".md"), t.to_markdown(p));
}

}  // namespace dcpeval
