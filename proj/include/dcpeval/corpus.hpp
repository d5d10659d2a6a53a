// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcpeval/error.hpp"
#include "dcpeval/io.hpp"
#include "dcpeval/text.hpp"

namespace dcpeval {

using json = nlohmann::json;

struct Utterance {
  std::string speaker_id;
  std::string text;
  std::int64_t timestamp = 0;

  bool operator==(const Utterance&) const = default;
};

struct Conversation {
  std::string conv_id;
  std::vector<Utterance> utterances;

  bool operator==(const Conversation&) const = default;

  std::size_t size() const { return utterances.size(); }

  std::int64_t first_timestamp() const {
    return utterances.empty() ? 0 : utterances.front().timestamp;
  }

  /// Distinct speakers in order of first appearance.
  std::vector<std::string> participants() const {
    std::vector<std::string> out;
    for (const auto& u : utterances) {
      if (std::find(out.begin(), out.end(), u.speaker_id) == out.end()) out.push_back(u.speaker_id);
    }
    return out;
  }
};

struct UserRecord {
  std::string speaker_id;
  std::string profile_text;
  bool is_annotated = false;

  bool operator==(const UserRecord&) const = default;
};

/// A system-side turn with the interlocutor's rating and outsider ratings.
struct ScoredExchange {
  std::string dialogue_id;
  int turn_index = 0;
  std::string participant_id;
  std::vector<Utterance> context;
  Utterance system_utterance;
  double interlocutor_score = 4.0;
  std::vector<double> outsider_scores;

  bool operator==(const ScoredExchange&) const = default;

  double outsider_mean() const {
    if (outsider_scores.empty()) return interlocutor_score;
    double s = 0.0;
    for (double v : outsider_scores) s += v;
    return s / static_cast<double>(outsider_scores.size());
  }
};

struct Corpus {
  std::vector<Conversation> conversations;
  std::vector<UserRecord> users;
};

template <typename T>
struct CorpusSplit {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
  std::string split_spec;
};

// ---------------------------------------------------------------------------
// JSON Lines I/O

namespace detail {

inline std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

inline const json& require(const json& obj, const char* field, const std::string& at) {
  if (!obj.is_object()) throw SchemaError(at + ": expected a JSON object");
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(at + ": missing field '" + field + "'");
  return *it;
}

inline std::string require_string(const json& obj, const char* field, const std::string& at) {
  const json& v = require(obj, field, at);
  if (!v.is_string()) throw SchemaError(at + ": field '" + field + "' must be a string");
  return v.get<std::string>();
}

inline std::int64_t require_int(const json& obj, const char* field, const std::string& at) {
  const json& v = require(obj, field, at);
  if (!v.is_number_integer()) throw SchemaError(at + ": field '" + field + "' must be an integer");
  return v.get<std::int64_t>();
}

inline double require_number(const json& obj, const char* field, const std::string& at) {
  const json& v = require(obj, field, at);
  if (!v.is_number()) throw SchemaError(at + ": field '" + field + "' must be a number");
  return v.get<double>();
}

inline Utterance parse_utterance(const json& obj, const std::string& at) {
  Utterance u;
  u.speaker_id = require_string(obj, "speaker_id", at);
  u.text = require_string(obj, "text", at);
  u.timestamp = require_int(obj, "timestamp", at);
  if (u.timestamp < 0) throw SchemaError(at + ": field 'timestamp' must be non-negative");
  return u;
}

inline std::vector<Utterance> parse_utterances(const json& arr, const char* field, const std::string& at) {
  if (!arr.is_array()) throw SchemaError(at + ": field '" + field + "' must be an array");
  std::vector<Utterance> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(parse_utterance(arr[i], at + ": " + field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline json utterance_json(const Utterance& u) {
  return json{{"speaker_id", u.speaker_id}, {"text", u.text}, {"timestamp", u.timestamp}};
}

/// Calls `fn(json, location)` for each non-blank line.
template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  if (!fs::exists(path)) throw Error("file '" + path.string() + "' does not exist");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where(path, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(at + ": invalid JSON: " + e.what());
    }
    fn(obj, at);
  }
}

}  // namespace detail

/// Parses a conversation file. Users are the distinct speakers, with empty
/// profiles until `attach_profiles` merges a user file.
inline Corpus load_conversations(const fs::path& path) {
  Corpus corpus;
  std::unordered_set<std::string> seen_ids;
  std::set<std::string> speakers;
  detail::for_each_json_line(path, [&](const json& obj, const std::string& at) {
    Conversation c;
    c.conv_id = detail::require_string(obj, "conv_id", at);
    c.utterances = detail::parse_utterances(detail::require(obj, "utterances", at), "utterances", at);
    if (!seen_ids.insert(c.conv_id).second) {
      throw SchemaError(at + ": duplicate conv_id '" + c.conv_id + "'");
    }
    for (const auto& u : c.utterances) speakers.insert(u.speaker_id);
    corpus.conversations.push_back(std::move(c));
  });
  for (const auto& s : speakers) corpus.users.push_back(UserRecord{s, "", false});
  return corpus;
}

/// Truncates a profile to `max_chars` code points.
inline std::string clamp_profile(const std::string& profile, std::size_t max_chars) {
  if (codepoint_length(profile) <= max_chars) return profile;
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i < profile.size(); ++i) {
    if ((static_cast<unsigned char>(profile[i]) & 0xC0) != 0x80) {
      if (count == max_chars) break;
      ++count;
    }
  }
  return profile.substr(0, i);
}

inline std::vector<UserRecord> load_users(const fs::path& path, std::size_t max_profile_chars = 300) {
  std::vector<UserRecord> users;
  std::unordered_set<std::string> seen;
  detail::for_each_json_line(path, [&](const json& obj, const std::string& at) {
    UserRecord u;
    u.speaker_id = detail::require_string(obj, "speaker_id", at);
    u.profile_text = clamp_profile(detail::require_string(obj, "profile_text", at), max_profile_chars);
    if (auto it = obj.find("is_annotated"); it != obj.end() && it->is_boolean()) u.is_annotated = it->get<bool>();
    if (!seen.insert(u.speaker_id).second) throw SchemaError(at + ": duplicate speaker_id '" + u.speaker_id + "'");
    users.push_back(std::move(u));
  });
  return users;
}

/// Replaces profile texts of known speakers; unknown profile entries are kept.
inline void attach_profiles(Corpus& corpus, const std::vector<UserRecord>& profiles) {
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& p : profiles) by_id[p.speaker_id] = &p;
  std::unordered_set<std::string> present;
  for (auto& u : corpus.users) {
    present.insert(u.speaker_id);
    if (auto it = by_id.find(u.speaker_id); it != by_id.end()) u = *it->second;
  }
  for (const auto& p : profiles) {
    if (!present.contains(p.speaker_id)) corpus.users.push_back(p);
  }
  std::sort(corpus.users.begin(), corpus.users.end(),
            [](const UserRecord& a, const UserRecord& b) { return a.speaker_id < b.speaker_id; });
}

inline std::vector<ScoredExchange> load_scored_exchanges(const fs::path& path) {
  std::vector<ScoredExchange> out;
  detail::for_each_json_line(path, [&](const json& obj, const std::string& at) {
    ScoredExchange e;
    e.dialogue_id = detail::require_string(obj, "dialogue_id", at);
    e.turn_index = static_cast<int>(detail::require_int(obj, "turn_index", at));
    e.context = detail::parse_utterances(detail::require(obj, "context", at), "context", at);
    e.system_utterance = detail::parse_utterance(detail::require(obj, "system_utterance", at), at + ": system_utterance");
    e.interlocutor_score = detail::require_number(obj, "interlocutor_score", at);
    if (e.interlocutor_score < 1.0 || e.interlocutor_score > 7.0) {
      throw SchemaError(at + ": field 'interlocutor_score' must lie in [1, 7]");
    }
    const json& os = detail::require(obj, "outsider_scores", at);
    if (!os.is_array()) throw SchemaError(at + ": field 'outsider_scores' must be an array");
    for (const auto& v : os) {
      if (!v.is_number() || v.get<double>() < 1.0 || v.get<double>() > 7.0) {
        throw SchemaError(at + ": field 'outsider_scores' entries must be numbers in [1, 7]");
      }
      e.outsider_scores.push_back(v.get<double>());
    }
    if (auto it = obj.find("participant_id"); it != obj.end() && it->is_string()) {
      e.participant_id = it->get<std::string>();
    }
    out.push_back(std::move(e));
  });
  // Fill missing participants from any context utterance of the same dialogue
  // not spoken by the system speaker.
  std::map<std::string, std::string> participant_of;
  for (const auto& e : out) {
    if (!e.participant_id.empty()) {
      participant_of.emplace(e.dialogue_id, e.participant_id);
      continue;
    }
    for (const auto& u : e.context) {
      if (u.speaker_id != e.system_utterance.speaker_id) {
        participant_of.emplace(e.dialogue_id, u.speaker_id);
        break;
      }
    }
  }
  for (auto& e : out) {
    if (e.participant_id.empty()) {
      auto it = participant_of.find(e.dialogue_id);
      if (it == participant_of.end()) {
        throw SchemaError(path.string() + ": cannot determine participant of dialogue '" + e.dialogue_id + "'");
      }
      e.participant_id = it->second;
    }
  }
  return out;
}

inline std::string conversations_to_jsonl(const std::vector<Conversation>& convs) {
  std::string out;
  for (const auto& c : convs) {
    json arr = json::array();
    for (const auto& u : c.utterances) arr.push_back(detail::utterance_json(u));
    out += json{{"conv_id", c.conv_id}, {"utterances", std::move(arr)}}.dump() + "\n";
  }
  return out;
}

inline std::string users_to_jsonl(const std::vector<UserRecord>& users) {
  std::string out;
  for (const auto& u : users) {
    out += json{{"speaker_id", u.speaker_id}, {"profile_text", u.profile_text}}.dump() + "\n";
  }
  return out;
}

inline std::string scored_to_jsonl(const std::vector<ScoredExchange>& exchanges) {
  std::string out;
  for (const auto& e : exchanges) {
    json ctx = json::array();
    for (const auto& u : e.context) ctx.push_back(detail::utterance_json(u));
    out += json{{"dialogue_id", e.dialogue_id},
                {"turn_index", e.turn_index},
                {"participant_id", e.participant_id},
                {"context", std::move(ctx)},
                {"system_utterance", detail::utterance_json(e.system_utterance)},
                {"interlocutor_score", e.interlocutor_score},
                {"outsider_scores", e.outsider_scores}}
               .dump() +
           "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering

struct FilterConfig {
  std::int64_t max_reply_gap_seconds = 1800;
  double bot_threshold = 0.5;
  std::size_t bot_min_utterances = 10;
};

struct FilterReport {
  std::size_t input_conversations = 0;
  std::size_t empty_utterances_removed = 0;
  std::size_t utterances_merged = 0;
  std::size_t dropped_gap = 0;
  std::size_t dropped_bot = 0;
  std::size_t bot_users = 0;
  std::size_t dropped_structure = 0;
  std::size_t dropped_short = 0;
  std::size_t output_conversations = 0;
};

struct FilterResult {
  std::vector<Conversation> conversations;
  FilterReport report;
};

namespace detail {

/// Joins consecutive same-speaker utterances with a newline. The merged
/// turn keeps the first part's timestamp.
inline Conversation merge_runs(const Conversation& c, std::size_t& merged) {
  Conversation out{c.conv_id, {}};
  for (const auto& u : c.utterances) {
    if (!out.utterances.empty() && out.utterances.back().speaker_id == u.speaker_id) {
      out.utterances.back().text += "\n" + u.text;
      ++merged;
    } else {
      out.utterances.push_back(u);
    }
  }
  return out;
}

inline bool timing_ok(const Conversation& c, std::int64_t max_gap) {
  for (std::size_t i = 1; i < c.utterances.size(); ++i) {
    const std::int64_t gap = c.utterances[i].timestamp - c.utterances[i - 1].timestamp;
    if (gap < 0 || gap > max_gap) return false;
  }
  return true;
}

inline bool two_party_alternating(const Conversation& c) {
  if (c.participants().size() != 2) return false;
  for (std::size_t i = 1; i < c.utterances.size(); ++i) {
    if (c.utterances[i].speaker_id == c.utterances[i - 1].speaker_id) return false;
  }
  return true;
}

}  // namespace detail

/// Applies, in order: empty-utterance removal, merging of same-speaker runs,
/// the reply-gap rule, the repetitive-user (bot) rule, the two-party
/// alternation rule and the minimum-length rule. The last three are iterated to
/// a fixpoint so the filter is idempotent.
inline FilterResult filter_corpus(const std::vector<Conversation>& convs, const FilterConfig& cfg = {}) {
  FilterResult result;
  FilterReport& rep = result.report;
  rep.input_conversations = convs.size();

  std::vector<Conversation> work;
  work.reserve(convs.size());
  for (const auto& c : convs) {
    Conversation kept{c.conv_id, {}};
    for (const auto& u : c.utterances) {
      if (normalize_text(u.text).empty()) {
        ++rep.empty_utterances_removed;
      } else {
        kept.utterances.push_back(u);
      }
    }
    work.push_back(detail::merge_runs(kept, rep.utterances_merged));
  }

  {
    std::vector<Conversation> next;
    for (auto& c : work) {
      if (detail::timing_ok(c, cfg.max_reply_gap_seconds)) {
        next.push_back(std::move(c));
      } else {
        ++rep.dropped_gap;
      }
    }
    work = std::move(next);
  }

  // Dropping conversations changes per-user counts, so the bot rule and the
  // structural rules are repeated until neither removes anything.
  for (;;) {
    std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> texts;
    std::unordered_map<std::string, std::size_t> totals;
    for (const auto& c : work) {
      for (const auto& u : c.utterances) {
        ++texts[u.speaker_id][normalize_text(u.text)];
        ++totals[u.speaker_id];
      }
    }
    std::unordered_set<std::string> bots;
    for (const auto& [speaker, total] : totals) {
      if (total < cfg.bot_min_utterances) continue;
      std::size_t top = 0;
      for (const auto& [t, n] : texts[speaker]) top = std::max(top, n);
      if (static_cast<double>(top) / static_cast<double>(total) > cfg.bot_threshold) bots.insert(speaker);
    }
    rep.bot_users += bots.size();
    const std::size_t before = work.size();
    std::vector<Conversation> next;
    for (auto& c : work) {
      bool has_bot = false;
      for (const auto& u : c.utterances) has_bot = has_bot || bots.contains(u.speaker_id);
      if (has_bot) {
        ++rep.dropped_bot;
      } else if (!detail::two_party_alternating(c)) {
        ++rep.dropped_structure;
      } else if (c.size() < 2) {
        ++rep.dropped_short;
      } else {
        next.push_back(std::move(c));
      }
    }
    work = std::move(next);
    if (work.size() == before) break;
  }
  result.conversations = std::move(work);
  rep.output_conversations = result.conversations.size();
  return result;
}

/// Keeps at most `max_per_user` conversations per user, visiting conversations
/// in chronological order of their first timestamp (ties by input order) and
/// retaining one only while both participants still have quota. The output
/// preserves input order.
inline std::vector<Conversation> cap_per_user(const std::vector<Conversation>& convs, std::size_t max_per_user) {
  if (max_per_user < 1) throw ConfigError("cap_per_user: max_per_user must be >= 1");
  std::vector<std::size_t> order(convs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return convs[a].first_timestamp() < convs[b].first_timestamp();
  });
  std::unordered_map<std::string, std::size_t> used;
  std::vector<bool> keep(convs.size(), false);
  for (std::size_t idx : order) {
    const auto parts = convs[idx].participants();
    bool ok = true;
    for (const auto& p : parts) ok = ok && used[p] < max_per_user;
    if (!ok) continue;
    keep[idx] = true;
    for (const auto& p : parts) ++used[p];
  }
  std::vector<Conversation> out;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (keep[i]) out.push_back(convs[i]);
  }
  return out;
}

/// First timestamp < boundary_a goes to train, [boundary_a, boundary_b) to
/// validation, the rest to test.
inline CorpusSplit<Conversation> split_time(const std::vector<Conversation>& convs, std::int64_t boundary_a,
                                            std::int64_t boundary_b) {
  if (!(boundary_a < boundary_b)) {
    throw ConfigError("split_time: boundary_a (" + std::to_string(boundary_a) + ") must be < boundary_b (" +
                      std::to_string(boundary_b) + ")");
  }
  CorpusSplit<Conversation> split;
  split.split_spec = "time: train < " + std::to_string(boundary_a) + " <= validation < " +
                     std::to_string(boundary_b) + " <= test";
  for (const auto& c : convs) {
    const std::int64_t t = c.first_timestamp();
    if (t < boundary_a) {
      split.train.push_back(c);
    } else if (t < boundary_b) {
      split.validation.push_back(c);
    } else {
      split.test.push_back(c);
    }
  }
  return split;
}

/// Boundaries putting the latest `test_fraction` of conversations (by first
/// timestamp) in test and the last `validation_fraction` of the remaining
/// pre-test window in validation.
inline std::pair<std::int64_t, std::int64_t> default_time_boundaries(const std::vector<Conversation>& convs,
                                                                     double test_fraction = 0.2,
                                                                     double validation_fraction = 0.05) {
  if (convs.size() < 3) throw ConfigError("default_time_boundaries: need at least 3 conversations");
  std::vector<std::int64_t> ts;
  ts.reserve(convs.size());
  for (const auto& c : convs) ts.push_back(c.first_timestamp());
  std::sort(ts.begin(), ts.end());
  const auto n = ts.size();
  std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n))));
  const std::size_t pre = n - n_test;
  std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(pre))));
  std::int64_t b = ts[pre];
  std::int64_t a = ts[pre - n_val];
  if (a >= b) b = a + 1;
  return {a, b};
}

namespace detail {

/// round-half-up of num/den for non-negative integers.
inline std::size_t round_half_up(std::size_t num, std::size_t den) { return (2 * num + den) / (2 * den); }

}  // namespace detail

/// Splits every dialogue chronologically into train/validation/test chunks of
/// the given proportions and concatenates the chunks across dialogues.
/// Dialogues are taken in order of first appearance; exchanges keep their
/// input order within a dialogue.
inline CorpusSplit<ScoredExchange> split_chronological_chunks(const std::vector<ScoredExchange>& exchanges,
                                                              std::array<std::size_t, 3> ratios = {8, 1, 1}) {
  const std::size_t total = ratios[0] + ratios[1] + ratios[2];
  if (total == 0) throw ConfigError("split_chronological_chunks: ratios sum to zero");
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const ScoredExchange*>> groups;
  for (const auto& e : exchanges) {
    auto [it, inserted] = groups.try_emplace(e.dialogue_id);
    if (inserted) order.push_back(e.dialogue_id);
    it->second.push_back(&e);
  }
  CorpusSplit<ScoredExchange> split;
  split.split_spec = "chunks " + std::to_string(ratios[0]) + ":" + std::to_string(ratios[1]) + ":" +
                     std::to_string(ratios[2]) + " per dialogue, round-half-up";
  for (const auto& id : order) {
    const auto& g = groups[id];
    const std::size_t len = g.size();
    if (len == 0) throw ConfigError("split_chronological_chunks: empty dialogue '" + id + "'");
    const std::size_t n_train = std::min(len, detail::round_half_up(len * ratios[0], total));
    const std::size_t n_val = std::min(len - n_train, detail::round_half_up(len * ratios[1], total));
    for (std::size_t i = 0; i < len; ++i) {
      auto& dst = i < n_train ? split.train : (i < n_train + n_val ? split.validation : split.test);
      dst.push_back(*g[i]);
    }
  }
  return split;
}

struct StatsReport {
  std::size_t conversations = 0;
  double avg_turns = 0.0;
  double avg_chars_per_turn = 0.0;
  double avg_chars_per_dialogue = 0.0;
  std::size_t replied = 0;     // DCP positives, N - 2 per conversation
  std::size_t no_replied = 0;  // DCP negatives, one per conversation
};

inline StatsReport corpus_stats(const std::vector<Conversation>& convs) {
  if (convs.empty()) throw ConfigError("corpus_stats: empty corpus");
  StatsReport s;
  s.conversations = convs.size();
  std::size_t turns = 0;
  std::size_t chars = 0;
  for (const auto& c : convs) {
    turns += c.size();
    for (const auto& u : c.utterances) chars += codepoint_length(u.text);
    if (c.size() >= 2) {
      s.replied += c.size() - 2;
      s.no_replied += 1;
    }
  }
  const auto n = static_cast<double>(convs.size());
  s.avg_turns = static_cast<double>(turns) / n;
  s.avg_chars_per_turn = turns == 0 ? 0.0 : static_cast<double>(chars) / static_cast<double>(turns);
  s.avg_chars_per_dialogue = static_cast<double>(chars) / n;
  return s;
}

}  // namespace dcpeval
