// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "dcpeval/corpus.hpp"

namespace dcpeval::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("dcpeval_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// Conversation from (speaker, text) turns, one minute apart from `t0`.
inline Conversation conv(std::string id, std::initializer_list<std::pair<const char*, const char*>> turns,
                         std::int64_t t0 = 1000, std::int64_t step = 60) {
  Conversation c{std::move(id), {}};
  std::int64_t t = t0;
  for (const auto& [spk, text] : turns) {
    c.utterances.push_back({spk, text, t});
    t += step;
  }
  return c;
}

/// Alternating A/B conversation of `n` turns with distinct texts.
inline Conversation alternating(const std::string& id, const std::string& a, const std::string& b, std::size_t n,
                                std::int64_t t0 = 1000) {
  Conversation c{id, {}};
  for (std::size_t i = 0; i < n; ++i) {
    c.utterances.push_back({i % 2 == 0 ? a : b, id + " turn " + std::to_string(i), t0 + 60 * static_cast<std::int64_t>(i)});
  }
  return c;
}

}  // namespace dcpeval::testing
