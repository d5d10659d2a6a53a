// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dcpeval/corpus.hpp"
#include "dcpeval/error.hpp"
#include "dcpeval/io.hpp"
#include "dcpeval/text.hpp"

namespace dcpeval {

/// One dialogue-continuity decision: given the prefix `context` ending with
/// an utterance by the partner of `target_speaker`, does the target reply?
struct DcpSample {
  std::vector<Utterance> context;
  std::string target_speaker;
  int label = 0;
  std::string source_conv_id;
  std::size_t prefix_len = 0;
};

enum class PersonalizationMode { none, user_token, profile, both };

inline std::string_view to_string(PersonalizationMode m) {
  switch (m) {
    case PersonalizationMode::none: return "none";
    case PersonalizationMode::user_token: return "user_token";
    case PersonalizationMode::profile: return "profile";
    case PersonalizationMode::both: return "both";
  }
  return "none";
}

inline PersonalizationMode mode_from_string(std::string_view s) {
  if (s == "none") return PersonalizationMode::none;
  if (s == "user_token") return PersonalizationMode::user_token;
  if (s == "profile") return PersonalizationMode::profile;
  if (s == "both") return PersonalizationMode::both;
  throw ConfigError("unknown personalization mode '" + std::string(s) + "'");
}

inline bool uses_user_token(PersonalizationMode m) {
  return m == PersonalizationMode::user_token || m == PersonalizationMode::both;
}
inline bool uses_profile(PersonalizationMode m) {
  return m == PersonalizationMode::profile || m == PersonalizationMode::both;
}

inline constexpr std::array<PersonalizationMode, 4> kAllModes = {
    PersonalizationMode::none, PersonalizationMode::user_token, PersonalizationMode::profile,
    PersonalizationMode::both};

/// Emits, for a conversation of N utterances, the prefixes of length 2..N.
/// Prefixes shorter than N are positives, the full conversation is the single
/// negative.
inline std::vector<DcpSample> build_dcp_samples(const std::vector<Conversation>& convs) {
  std::vector<DcpSample> out;
  for (const auto& c : convs) {
    if (c.size() < 2) throw ConfigError("build_dcp_samples: conversation '" + c.conv_id + "' has fewer than 2 utterances");
    const auto parts = c.participants();
    if (parts.size() != 2) throw ConfigError("build_dcp_samples: conversation '" + c.conv_id + "' is not two-party");
    for (std::size_t len = 2; len <= c.size(); ++len) {
      DcpSample s;
      s.context.assign(c.utterances.begin(), c.utterances.begin() + static_cast<std::ptrdiff_t>(len));
      const std::string& last = s.context.back().speaker_id;
      s.target_speaker = parts[0] == last ? parts[1] : parts[0];
      s.label = len < c.size() ? 1 : 0;
      s.source_conv_id = c.conv_id;
      s.prefix_len = len;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

enum class TokenKind : std::uint8_t { special, user, text };

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kCls = 2;
  static constexpr std::int32_t kSep = 3;
  static constexpr std::int32_t kSpkA = 4;
  static constexpr std::int32_t kSpkB = 5;

  Vocabulary() : Vocabulary(TokenizerKind::whitespace, {}, {}) {}

  /// `text_tokens` and `user_ids` are inserted in the given order.
  Vocabulary(TokenizerKind tokenizer, const std::vector<std::string>& user_ids,
             const std::vector<std::string>& text_tokens)
      : tokenizer_(tokenizer) {
    for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[SPK_A]", "[SPK_B]"}) {
      tokens_.emplace_back(s);
      kinds_.push_back(TokenKind::special);
    }
    for (const auto& u : user_ids) {
      if (user_index_.contains(u)) continue;
      user_index_[u] = static_cast<std::int32_t>(tokens_.size());
      tokens_.push_back(user_token_name(u));
      kinds_.push_back(TokenKind::user);
    }
    for (const auto& t : text_tokens) {
      if (text_index_.contains(t) || is_reserved_name(t)) continue;
      text_index_[t] = static_cast<std::int32_t>(tokens_.size());
      tokens_.push_back(t);
      kinds_.push_back(TokenKind::text);
    }
  }

  static std::string user_token_name(std::string_view id) { return "[USER:" + std::string(id) + "]"; }

  /// Text tokens that collide with special or user-token spellings are never
  /// admitted; they map to UNK.
  static bool is_reserved_name(std::string_view t) {
    return t == "[PAD]" || t == "[UNK]" || t == "[CLS]" || t == "[SEP]" || t == "[SPK_A]" || t == "[SPK_B]" ||
           (t.starts_with("[USER:") && t.ends_with("]"));
  }

  std::size_t size() const { return tokens_.size(); }
  TokenizerKind tokenizer() const { return tokenizer_; }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  TokenKind kind(std::int32_t id) const { return kinds_.at(static_cast<std::size_t>(id)); }

  std::int32_t text_id(const std::string& tok) const {
    auto it = text_index_.find(tok);
    return it == text_index_.end() ? kUnk : it->second;
  }

  std::optional<std::int32_t> user_token(const std::string& speaker_id) const {
    auto it = user_index_.find(speaker_id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t num_users() const { return user_index_.size(); }
  std::size_t num_text_tokens() const { return text_index_.size(); }

  std::vector<std::int32_t> encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    for (const auto& t : tokenize(text, tokenizer_)) ids.push_back(text_id(t));
    return ids;
  }

  json to_json() const {
    json tokens = json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) tokens[tokens_[i]] = i;
    return json{{"format", "dcpeval-vocab"}, {"version", 1}, {"tokenizer", std::string(to_string(tokenizer_))},
                {"tokens", std::move(tokens)}};
  }

  static Vocabulary from_json(const json& j) {
    if (j.value("format", "") != "dcpeval-vocab" || j.value("version", 0) != 1) {
      throw SchemaError("vocabulary: unknown format or version");
    }
    const json& tokens = j.at("tokens");
    std::vector<std::string> by_id(tokens.size());
    std::vector<bool> filled(tokens.size(), false);
    for (auto it = tokens.begin(); it != tokens.end(); ++it) {
      const auto id = it.value().get<std::size_t>();
      if (id >= by_id.size() || filled[id]) throw SchemaError("vocabulary: ids are not dense");
      by_id[id] = it.key();
      filled[id] = true;
    }
    Vocabulary v(tokenizer_from_string(j.at("tokenizer").get<std::string>()), {}, {});
    if (by_id.size() < 6 || by_id[0] != "[PAD]" || by_id[1] != "[UNK]" || by_id[2] != "[CLS]" || by_id[3] != "[SEP]" ||
        by_id[4] != "[SPK_A]" || by_id[5] != "[SPK_B]") {
      throw SchemaError("vocabulary: special tokens missing or misplaced");
    }
    for (std::size_t i = 6; i < by_id.size(); ++i) {
      const auto& t = by_id[i];
      v.tokens_.push_back(t);
      if (t.starts_with("[USER:") && t.ends_with("]")) {
        v.kinds_.push_back(TokenKind::user);
        v.user_index_[t.substr(6, t.size() - 7)] = static_cast<std::int32_t>(i);
      } else {
        v.kinds_.push_back(TokenKind::text);
        v.text_index_[t] = static_cast<std::int32_t>(i);
      }
    }
    return v;
  }

  void save(const fs::path& path) const { write_file_atomic(path, to_json().dump(1) + "\n"); }
  static Vocabulary load(const fs::path& path) { return from_json(json::parse(read_file(path))); }

  bool operator==(const Vocabulary& o) const { return tokenizer_ == o.tokenizer_ && tokens_ == o.tokens_; }

 private:
  TokenizerKind tokenizer_;
  std::vector<std::string> tokens_;
  std::vector<TokenKind> kinds_;
  std::unordered_map<std::string, std::int32_t> text_index_;
  std::unordered_map<std::string, std::int32_t> user_index_;
};

/// Counts tokens over `texts`; tokens seen fewer than `min_freq` times are left
/// out (they encode as UNK). Text tokens are ordered lexicographically, users
/// by id.
inline Vocabulary build_vocab(const std::vector<std::string>& texts, std::vector<std::string> user_ids,
                              std::size_t min_freq, TokenizerKind tokenizer = TokenizerKind::whitespace) {
  if (texts.empty()) throw ConfigError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t, tokenizer)) ++freq[tok];
  }
  std::vector<std::string> kept;
  for (const auto& [tok, n] : freq) {
    if (n >= min_freq) kept.push_back(tok);
  }
  std::sort(user_ids.begin(), user_ids.end());
  user_ids.erase(std::unique(user_ids.begin(), user_ids.end()), user_ids.end());
  return Vocabulary(tokenizer, user_ids, kept);
}

/// Vocabulary over a training split: utterance texts plus the profiles of the
/// split's speakers; one user token per speaker in the split.
inline Vocabulary build_vocab(const std::vector<Conversation>& train, const std::vector<UserRecord>& users,
                              std::size_t min_freq, TokenizerKind tokenizer = TokenizerKind::whitespace) {
  if (train.empty()) throw ConfigError("build_vocab: empty corpus");
  std::vector<std::string> texts;
  std::vector<std::string> ids;
  std::unordered_set<std::string> speakers;
  for (const auto& c : train) {
    for (const auto& u : c.utterances) {
      texts.push_back(u.text);
      if (speakers.insert(u.speaker_id).second) ids.push_back(u.speaker_id);
    }
  }
  for (const auto& u : users) {
    if (speakers.contains(u.speaker_id) && !u.profile_text.empty()) texts.push_back(u.profile_text);
  }
  return build_vocab(texts, ids, min_freq, tokenizer);
}

// ---------------------------------------------------------------------------
// Serialization

struct Serialized {
  std::vector<std::int32_t> ids;  // padded to max_len
  bool truncated = false;         // last utterance or profile had to be cut
  std::size_t kept_utterances = 0;
};

namespace detail {

inline void pad_to(std::vector<std::int32_t>& ids, std::size_t max_len) {
  ids.resize(max_len, Vocabulary::kPad);
}

/// Chooses the newest utterances that fit into `budget` slots (one speaker
/// token each plus their tokens). The newest utterance is always kept, cut at
/// the tail if needed. Returns encoded utterances oldest first.
inline std::vector<std::vector<std::int32_t>> fit_newest(const std::vector<std::vector<std::int32_t>>& encoded,
                                                         std::size_t budget, bool& truncated) {
  std::vector<std::vector<std::int32_t>> kept;
  if (encoded.empty()) return kept;
  std::size_t used = 0;
  for (std::size_t k = encoded.size(); k-- > 0;) {
    const std::size_t cost = 1 + encoded[k].size();
    if (k + 1 == encoded.size()) {
      auto last = encoded[k];
      if (cost > budget) {
        last.resize(budget > 1 ? budget - 1 : 0);
        truncated = true;
      }
      used += 1 + last.size();
      kept.push_back(std::move(last));
      continue;
    }
    if (used + cost > budget) break;
    used += cost;
    kept.push_back(encoded[k]);
  }
  std::reverse(kept.begin(), kept.end());
  return kept;
}

}  // namespace detail

/// CLS [profile SEP] (speaker utterance)* SEP PAD*. Profile modes always
/// emit the profile segment; it is empty when `user` is null. Speaker tokens are
/// SPK_A/SPK_B by first appearance among the retained utterances; with a
/// user-token mode the target speaker's turns are marked with its USER token
/// instead (unknown users keep the generic token). Oldest utterances are
/// dropped first; the profile and the newest utterance are never dropped.
inline Serialized serialize(const DcpSample& sample, PersonalizationMode mode, const UserRecord* user,
                            const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 16) throw ConfigError("serialize: max_len must be >= 16");
  if (sample.context.empty()) throw ConfigError("serialize: empty context");
  if (user && user->speaker_id != sample.target_speaker) {
    throw ConfigError("serialize: user record '" + user->speaker_id + "' does not match target '" +
                      sample.target_speaker + "'");
  }
  Serialized out;
  std::vector<std::int32_t> profile;
  if (uses_profile(mode) && user) {
    profile = vocab.encode(user->profile_text);
  }
  if (uses_profile(mode)) {
    // Leave room for CLS, profile SEP, one speaker token, one text token, final SEP.
    const std::size_t max_profile = max_len - 5;
    if (profile.size() > max_profile) {
      profile.resize(max_profile);
      out.truncated = true;
    }
  }
  std::vector<std::vector<std::int32_t>> encoded;
  encoded.reserve(sample.context.size());
  for (const auto& u : sample.context) encoded.push_back(vocab.encode(u.text));

  const std::size_t fixed = 2 + (uses_profile(mode) ? profile.size() + 1 : 0);
  auto kept = detail::fit_newest(encoded, max_len - fixed, out.truncated);
  const std::size_t first = sample.context.size() - kept.size();
  out.kept_utterances = kept.size();

  std::optional<std::int32_t> target_tok;
  if (uses_user_token(mode)) target_tok = vocab.user_token(sample.target_speaker);

  std::vector<std::string> order;
  out.ids.reserve(max_len);
  out.ids.push_back(Vocabulary::kCls);
  if (uses_profile(mode)) {
    out.ids.insert(out.ids.end(), profile.begin(), profile.end());
    out.ids.push_back(Vocabulary::kSep);
  }
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const std::string& spk = sample.context[first + k].speaker_id;
    auto pos = std::find(order.begin(), order.end(), spk);
    if (pos == order.end()) pos = order.insert(order.end(), spk);
    std::int32_t tok = pos == order.begin() ? Vocabulary::kSpkA : Vocabulary::kSpkB;
    if (target_tok && spk == sample.target_speaker) tok = *target_tok;
    out.ids.push_back(tok);
    out.ids.insert(out.ids.end(), kept[k].begin(), kept[k].end());
  }
  out.ids.push_back(Vocabulary::kSep);
  if (out.truncated) {
    // Rate-limited: the first few, then every 1000th.
    static std::atomic<std::size_t> n_truncated{0};
    const std::size_t n = ++n_truncated;
    if (n <= 5 || n % 1000 == 0) {
      spdlog::warn("serialize: sample from '{}' exceeds max_len {}; tail truncated ({} so far)", sample.source_conv_id,
                   max_len, n);
    }
  }
  detail::pad_to(out.ids, max_len);
  return out;
}

/// CLS context SEP response SEP, generic speaker tokens only. Used by the
/// cross-encoding (NSP-style) baseline.
inline std::vector<std::int32_t> serialize_pair(const std::vector<Utterance>& context, const Utterance& response,
                                                const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 16) throw ConfigError("serialize_pair: max_len must be >= 16");
  auto resp = vocab.encode(response.text);
  const std::size_t max_resp = max_len / 2 - 2;
  if (resp.size() > max_resp) resp.resize(max_resp);
  std::vector<std::vector<std::int32_t>> encoded;
  for (const auto& u : context) encoded.push_back(vocab.encode(u.text));
  bool truncated = false;
  const std::size_t fixed = 3 + 1 + resp.size();
  auto kept = detail::fit_newest(encoded, max_len - fixed, truncated);
  const std::size_t first = context.size() - kept.size();
  std::vector<std::string> order;
  auto spk_tok = [&](const std::string& spk) {
    auto pos = std::find(order.begin(), order.end(), spk);
    if (pos == order.end()) pos = order.insert(order.end(), spk);
    return pos == order.begin() ? Vocabulary::kSpkA : Vocabulary::kSpkB;
  };
  std::vector<std::int32_t> ids{Vocabulary::kCls};
  for (std::size_t k = 0; k < kept.size(); ++k) {
    ids.push_back(spk_tok(context[first + k].speaker_id));
    ids.insert(ids.end(), kept[k].begin(), kept[k].end());
  }
  ids.push_back(Vocabulary::kSep);
  ids.push_back(spk_tok(response.speaker_id));
  ids.insert(ids.end(), resp.begin(), resp.end());
  ids.push_back(Vocabulary::kSep);
  detail::pad_to(ids, max_len);
  return ids;
}

/// CLS (speaker utterance)* SEP with generic speaker tokens; the bi-encoder
/// (RUBER-style) baseline encodes context and response separately with it.
inline std::vector<std::int32_t> serialize_segment(const std::vector<Utterance>& utterances, const Vocabulary& vocab,
                                                   std::size_t max_len) {
  DcpSample s;
  s.context = utterances;
  s.target_speaker = "";
  return serialize(s, PersonalizationMode::none, nullptr, vocab, max_len).ids;
}

struct Detokenized {
  std::vector<std::string> profile;
  std::vector<std::string> utterances;  // tokens joined by single spaces
};

/// Inverse of `serialize` up to truncation and UNK: splits the body on
/// speaker tokens. `with_profile` must match the mode the ids were built with.
inline Detokenized detokenize(const std::vector<std::int32_t>& ids, const Vocabulary& vocab, bool with_profile) {
  Detokenized out;
  std::vector<std::int32_t> body;
  for (auto id : ids) {
    if (id != Vocabulary::kPad) body.push_back(id);
  }
  std::size_t i = (!body.empty() && body[0] == Vocabulary::kCls) ? 1 : 0;
  if (with_profile) {
    while (i < body.size() && body[i] != Vocabulary::kSep) out.profile.push_back(vocab.token(body[i++]));
    ++i;
  }
  std::string cur;
  bool open = false;
  for (; i < body.size(); ++i) {
    const auto id = body[i];
    if (id == Vocabulary::kSep) break;
    if (id == Vocabulary::kSpkA || id == Vocabulary::kSpkB || vocab.kind(id) == TokenKind::user) {
      if (open) out.utterances.push_back(cur);
      cur.clear();
      open = true;
      continue;
    }
    if (!cur.empty() && vocab.tokenizer() == TokenizerKind::whitespace) cur += " ";
    cur += vocab.token(id);
  }
  if (open) out.utterances.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------
// Binary dataset cache: "DCPD" | u32 version | u64 count | records, where a
// record is u32 n | n × i32 ids (trailing PAD removed) | u8 label |
// u32 m | m bytes of the target speaker id. All integers little-endian.

struct CachedRecord {
  std::vector<std::int32_t> ids;
  std::uint8_t label = 0;
  std::string target_speaker;

  bool operator==(const CachedRecord&) const = default;
};


inline void write_dataset_cache(const fs::path& path, const std::vector<CachedRecord>& records) {
  std::string out = "DCPD";
  put_u32(out, 1);
  put_u64(out, records.size());
  for (const auto& r : records) {
    std::size_t n = r.ids.size();
    while (n > 0 && r.ids[n - 1] == Vocabulary::kPad) --n;
    put_u32(out, static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) put_u32(out, static_cast<std::uint32_t>(r.ids[i]));
    out.push_back(static_cast<char>(r.label));
    put_u32(out, static_cast<std::uint32_t>(r.target_speaker.size()));
    out += r.target_speaker;
  }
  write_file_atomic(path, out);
}

/// Reads a cache written by `write_dataset_cache`; ids come back unpadded.
inline std::vector<CachedRecord> read_dataset_cache(const fs::path& path) {
  const std::string data = read_file(path);
  ByteReader rd(data, path.string());
  if (rd.bytes(4) != "DCPD") throw SchemaError(path.string() + ": not a dataset cache");
  if (rd.get(4) != 1) throw SchemaError(path.string() + ": unsupported dataset cache version");
  const std::uint64_t count = rd.get(8);
  std::vector<CachedRecord> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    CachedRecord r;
    const auto n = rd.get(4);
    r.ids.resize(n);
    for (auto& id : r.ids) id = static_cast<std::int32_t>(rd.get(4));
    r.label = static_cast<std::uint8_t>(rd.get(1));
    r.target_speaker = std::string(rd.bytes(rd.get(4)));
    out.push_back(std::move(r));
  }
  if (!rd.done()) throw SchemaError(path.string() + ": trailing bytes after last record");
  return out;
}

}  // namespace dcpeval
