// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "dcpeval/error.hpp"

namespace dcpeval {

enum class TokenizerKind { whitespace, character };

inline std::string_view to_string(TokenizerKind k) {
  return k == TokenizerKind::whitespace ? "whitespace" : "character";
}

inline TokenizerKind tokenizer_from_string(std::string_view s) {
  if (s == "whitespace") return TokenizerKind::whitespace;
  if (s == "character") return TokenizerKind::character;
  throw ConfigError("unknown tokenizer '" + std::string(s) + "'");
}

/// NFC-normalizes `text`, collapses every run of Unicode whitespace into a
/// single ASCII space and trims both ends.
inline std::string normalize_text(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");

  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    if (pending_space) {
      out.append(static_cast<UChar>(0x20));
      pending_space = false;
    }
    out.append(c);
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

/// Number of Unicode code points in a UTF-8 string.
inline std::size_t codepoint_length(std::string_view utf8) {
  std::size_t n = 0;
  for (unsigned char c : utf8) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\n' || text[i] == '\t' || text[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < text.size() && !(text[j] == ' ' || text[j] == '\n' || text[j] == '\t' || text[j] == '\r')) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Tokenizes normalized text. Character mode emits one token per non-space
/// code point, for scripts without word delimiters.
inline std::vector<std::string> tokenize(std::string_view text, TokenizerKind kind) {
  const std::string norm = normalize_text(text);
  if (kind == TokenizerKind::whitespace) return split_whitespace(norm);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < norm.size()) {
    std::size_t j = i + 1;
    while (j < norm.size() && (static_cast<unsigned char>(norm[j]) & 0xC0) == 0x80) ++j;
    if (norm[i] != ' ') out.emplace_back(norm.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace dcpeval
