// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dcpeval/corpus.hpp"
#include "dcpeval/error.hpp"
#include "dcpeval/rng.hpp"
#include "dcpeval/text.hpp"

namespace dcpeval {

struct LengthBand {
  std::size_t min_chars = 0;
  std::size_t max_chars = 0;

  bool contains(std::size_t n) const { return n >= min_chars && n <= max_chars; }
  bool operator==(const LengthBand&) const = default;
};

/// A simulated user with known reply behaviour.
struct UserArchetype {
  std::string speaker_id;
  std::vector<std::string> interest_topics;
  LengthBand length_preference;
  double question_affinity = 0.5;
  double base_reply_rate = 0.5;
  double activity = 1.0;  // relative frequency of starting/joining conversations
  std::string profile_text;

  bool operator==(const UserArchetype&) const = default;
};

/// Oracle logit = rate·(base_reply_rate − 0.5) + overlap·topic_overlap
///              + band·length_band_match + question·(ends_with_question × question_affinity)
struct OracleWeights {
  double rate = 7.0;
  double overlap = 1.5;
  double band = 1.0;
  double question = 4.0;
};

struct OracleFeatures {
  std::size_t topic_overlap = 0;
  bool length_band_match = false;
  bool ends_with_question = false;
};

struct SynthConfig {
  std::size_t n_users = 50;
  std::size_t n_convs = 20000;
  std::size_t n_topics = 40;
  std::size_t min_interests = 3;
  std::size_t max_interests = 5;
  double rate_lo = 0.02;
  double rate_hi = 0.6;
  double activity_sigma = 0.8;  // log-normal spread of user activity
  bool homogeneous = false;     // every user shares one set of parameters
  OracleWeights weights;
  std::size_t max_turns = 12;
  double p_echo = 0.35;     // topic copied from the utterance being answered
  double p_own = 0.35;      // topic from the speaker's own interests
  double p_question = 0.5;
  std::int64_t start_time = 1483228800;  // 2017-01-01
  std::int64_t end_time = 1546300800;    // 2019-01-01
  std::int64_t min_gap_seconds = 20;
  std::int64_t max_gap_seconds = 1500;
  // scored (Wizard-of-Oz style) corpus
  std::size_t exchanges_per_dialogue = 100;
  std::size_t context_window = 8;
  double score_noise = 0.3;
  std::size_t n_outsiders = 5;
  double outsider_noise = 0.5;
  bool outsider_equals_interlocutor = false;
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Topic vocabulary; the first `n` entries are used.
inline std::vector<std::string> topic_vocabulary(std::size_t n) {
  static const std::vector<std::string> base = {
      "music",   "soccer",  "ramen",    "anime",   "coffee",  "travel",  "cats",    "dogs",
      "movies",  "games",   "cooking",  "baseball", "tennis", "sushi",   "camping", "guitar",
      "piano",   "books",   "manga",    "cars",    "trains",  "fashion", "makeup",  "history",
      "science", "space",   "politics", "weather", "beer",    "wine",    "tea",     "running",
      "yoga",    "fishing", "painting", "drama",   "idols",   "comedy",  "stocks",  "crypto",
      "gardens", "birds",   "chess",    "poetry",  "hiking",  "skiing",  "surfing", "baking"};
  if (n == 0 || n > base.size()) {
    throw ConfigError("n_topics must be in [1, " + std::to_string(base.size()) + "]");
  }
  return {base.begin(), base.begin() + static_cast<std::ptrdiff_t>(n)};
}

inline const std::vector<std::string>& generic_utterances() {
  static const std::vector<std::string> g = {"i see", "ok", "haha", "nice", "i know right",
                                             "that is true", "sure", "lol yeah", "hmm", "same here"};
  return g;
}

inline std::string_view reply_rate_phrase(double rate) {
  if (rate < 0.2) return "rarely replies";
  if (rate < 0.35) return "seldom replies";
  if (rate < 0.5) return "sometimes replies";
  if (rate < 0.65) return "often replies";
  return "always replies";
}

inline std::string make_profile_text(const UserArchetype& u) {
  static const char* band_names[] = {"short", "medium", "long"};
  const std::size_t band_idx = u.length_preference.max_chars <= 20 ? 0 : (u.length_preference.max_chars <= 36 ? 1 : 2);
  std::string s = "likes";
  for (const auto& t : u.interest_topics) s += " " + t;
  s += " | " + std::string(reply_rate_phrase(u.base_reply_rate));
  s += " | prefers " + std::string(band_names[band_idx]) + " posts";
  s += u.question_affinity < 0.33 ? " | hates questions" : (u.question_affinity < 0.66 ? " | tolerates questions" : " | loves questions");
  return s;
}

inline const std::vector<LengthBand>& length_bands() {
  static const std::vector<LengthBand> bands = {{1, 20}, {14, 36}, {30, 90}};
  return bands;
}

/// Draws `n` archetypes. Reply rates are stratified: the first half of users
/// (rounded up) draw from [rate_lo, 0.5), the rest from (0.5, rate_hi], each
/// within evenly spaced strata, and ids are then shuffled over the rates.
inline std::vector<UserArchetype> gen_users(std::size_t n, std::uint64_t seed, const SynthConfig& cfg = {}) {
  if (n < 1) throw ConfigError("gen_users: n must be >= 1");
  if (!(cfg.rate_lo > 0.0 && cfg.rate_lo < 0.5 && cfg.rate_hi > 0.5 && cfg.rate_hi < 1.0)) {
    throw ConfigError("gen_users: need 0 < rate_lo < 0.5 < rate_hi < 1");
  }
  if (cfg.min_interests < 1 || cfg.min_interests > cfg.max_interests || cfg.max_interests > cfg.n_topics) {
    throw ConfigError("gen_users: invalid interest count range");
  }
  const auto topics = topic_vocabulary(cfg.n_topics);
  Rng rng(derive_seed(seed, 0x75736572));

  const std::size_t n_low = (n + 1) / 2;
  const std::size_t n_high = n - n_low;
  std::vector<double> rates;
  for (std::size_t i = 0; i < n_low; ++i) {
    const double w = (0.5 - cfg.rate_lo) / static_cast<double>(n_low);
    rates.push_back(cfg.rate_lo + w * (static_cast<double>(i) + rng.uniform()));
  }
  for (std::size_t i = 0; i < n_high; ++i) {
    const double w = (cfg.rate_hi - 0.5) / static_cast<double>(n_high);
    rates.push_back(0.5 + w * (static_cast<double>(i) + rng.uniform()));
  }
  for (auto& r : rates) r = std::clamp(r, cfg.rate_lo + 1e-9, cfg.rate_hi);
  rng.shuffle(rates);

  std::vector<UserArchetype> users;
  users.reserve(n);
  UserArchetype shared;
  for (std::size_t i = 0; i < n; ++i) {
    UserArchetype u;
    char id[32];
    std::snprintf(id, sizeof id, "u%03zu", i);
    u.speaker_id = id;
    if (cfg.homogeneous && i > 0) {
      u.interest_topics = shared.interest_topics;
      u.length_preference = shared.length_preference;
      u.question_affinity = shared.question_affinity;
      u.base_reply_rate = shared.base_reply_rate;
      u.activity = 1.0;
    } else {
      const std::size_t k = cfg.min_interests + rng.index(cfg.max_interests - cfg.min_interests + 1);
      std::vector<std::size_t> idx(topics.size());
      for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
      rng.shuffle(idx);
      idx.resize(k);
      std::sort(idx.begin(), idx.end());
      for (std::size_t j : idx) u.interest_topics.push_back(topics[j]);
      u.length_preference = length_bands()[rng.index(length_bands().size())];
      u.question_affinity = rng.uniform();
      u.base_reply_rate = cfg.homogeneous ? 0.5 : rates[i];
      u.activity = cfg.homogeneous ? 1.0 : std::exp(cfg.activity_sigma * rng.normal());
      if (cfg.homogeneous) shared = u;
    }
    u.profile_text = make_profile_text(u);
    users.push_back(std::move(u));
  }
  return users;
}

inline OracleFeatures oracle_features(std::string_view response, const UserArchetype& user) {
  OracleFeatures f;
  const std::string norm = normalize_text(response);
  const auto tokens = split_whitespace(norm);
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens) {
    if (seen.insert(t).second &&
        std::find(user.interest_topics.begin(), user.interest_topics.end(), t) != user.interest_topics.end()) {
      ++f.topic_overlap;
    }
  }
  f.length_band_match = user.length_preference.contains(codepoint_length(norm));
  f.ends_with_question = !norm.empty() && norm.back() == '?';
  return f;
}

inline double oracle_logit(const OracleFeatures& f, const UserArchetype& user, const OracleWeights& w) {
  return w.rate * (user.base_reply_rate - 0.5) + w.overlap * static_cast<double>(f.topic_overlap) +
         w.band * (f.length_band_match ? 1.0 : 0.0) +
         w.question * (f.ends_with_question ? user.question_affinity : 0.0);
}

/// Ground-truth probability that `user` replies to `response`. The context
/// is accepted for interface symmetry with learned evaluators; the oracle
/// depends only on the response and the user.
inline double oracle_propensity(const std::vector<Utterance>& /*context*/, std::string_view response,
                                const UserArchetype& user, const OracleWeights& w = {}) {
  if (normalize_text(response).empty()) throw ConfigError("oracle_propensity: empty response");
  return logistic(oracle_logit(oracle_features(response, user), user, w));
}

using PropensityFn =
    std::function<double(const std::vector<Utterance>& context, const Utterance& response, const UserArchetype& target)>;

namespace detail {

struct Template {
  std::string_view text;  // "{a}" / "{b}" are topic slots
  bool question;
};

inline const std::vector<Template>& templates() {
  static const std::vector<Template> t = {
      {"{a}", false},
      {"love {a}", false},
      {"i like {a}", false},
      {"{a} is great", false},
      {"{a} and {b} today", false},
      {"been thinking about {a} lately", false},
      {"honestly {a} is the best thing ever", false},
      {"i spent the whole weekend on {a} and {b}", false},
      {"my friend keeps talking about {a} all the time", false},
      {"{a} ?", true},
      {"do you like {a} ?", true},
      {"what about {a} ?", true},
      {"have you ever tried {a} and {b} ?", true},
      {"what do you think about {a} these days ?", true},
  };
  return t;
}

inline std::vector<std::string> topics_in(std::string_view text, const std::unordered_set<std::string>& topic_set) {
  std::vector<std::string> out;
  for (auto& tok : split_whitespace(text)) {
    if (topic_set.contains(tok)) out.push_back(std::move(tok));
  }
  return out;
}

class UtteranceMaker {
 public:
  explicit UtteranceMaker(const SynthConfig& cfg) : cfg_(cfg), topics_(topic_vocabulary(cfg.n_topics)) {
    topic_set_.insert(topics_.begin(), topics_.end());
    for (std::size_t i = 0; i < templates().size(); ++i) {
      (templates()[i].question ? question_ : statement_).push_back(i);
    }
  }

  std::string make(const std::vector<std::string>& own_interests, const Utterance* prev, Rng& rng) const {
    const auto prev_topics = prev ? topics_in(prev->text, topic_set_) : std::vector<std::string>{};
    const double r = rng.uniform();
    std::string a;
    if (r < cfg_.p_echo && !prev_topics.empty()) {
      a = prev_topics[rng.index(prev_topics.size())];
    } else if (r < cfg_.p_echo + cfg_.p_own && !own_interests.empty()) {
      a = own_interests[rng.index(own_interests.size())];
    } else {
      a = topics_[rng.index(topics_.size())];
    }
    const auto& pool = rng.bernoulli(cfg_.p_question) ? question_ : statement_;
    const Template& t = templates()[pool[rng.index(pool.size())]];
    std::string b;
    if (t.text.find("{b}") != std::string_view::npos) {
      do {
        b = (rng.bernoulli(0.5) && !own_interests.empty()) ? own_interests[rng.index(own_interests.size())]
                                                           : topics_[rng.index(topics_.size())];
      } while (b == a && topics_.size() > 1);
    }
    std::string out;
    for (std::size_t i = 0; i < t.text.size(); ++i) {
      if (t.text.compare(i, 3, "{a}") == 0) {
        out += a;
        i += 2;
      } else if (t.text.compare(i, 3, "{b}") == 0) {
        out += b;
        i += 2;
      } else {
        out += t.text[i];
      }
    }
    return out;
  }

  const std::vector<std::string>& topics() const { return topics_; }

 private:
  const SynthConfig& cfg_;
  std::vector<std::string> topics_;
  std::unordered_set<std::string> topic_set_;
  std::vector<std::size_t> statement_;
  std::vector<std::size_t> question_;
};

}  // namespace detail

inline PropensityFn default_propensity(const OracleWeights& w) {
  return [w](const std::vector<Utterance>& ctx, const Utterance& response, const UserArchetype& target) {
    return oracle_propensity(ctx, response.text, target, w);
  };
}

/// Simulates two-party conversations. Every conversation has an opening post
/// and one reply; afterwards the partner of the last speaker replies with the
/// probability given by `propensity` until a non-reply or `max_turns`.
/// Conversation i uses its own derived seed, so output is independent of
/// generation order.
inline std::vector<Conversation> gen_dcp_corpus(const std::vector<UserArchetype>& users, const SynthConfig& cfg,
                                                std::uint64_t seed, PropensityFn propensity = nullptr) {
  if (users.size() < 2) throw ConfigError("gen_dcp_corpus: need at least 2 users");
  if (cfg.max_turns < 2) throw ConfigError("gen_dcp_corpus: max_turns must be >= 2");
  if (cfg.max_gap_seconds < cfg.min_gap_seconds || cfg.end_time <= cfg.start_time) {
    throw ConfigError("gen_dcp_corpus: invalid time configuration");
  }
  if (!propensity) propensity = default_propensity(cfg.weights);
  const detail::UtteranceMaker maker(cfg);
  std::vector<double> activity;
  for (const auto& u : users) activity.push_back(u.activity);

  std::vector<Conversation> convs;
  convs.reserve(cfg.n_convs);
  const int width = cfg.n_convs < 1000000 ? 6 : 9;
  for (std::size_t i = 0; i < cfg.n_convs; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t x = rng.weighted(activity);
    std::size_t y;
    do {
      y = rng.weighted(activity);
    } while (y == x);
    const std::size_t speakers[2] = {x, y};

    char id[32];
    std::snprintf(id, sizeof id, "c%0*zu", width, i);
    Conversation c{id, {}};
    std::int64_t ts = cfg.start_time + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(cfg.end_time - cfg.start_time)));
    auto gap = [&] {
      return cfg.min_gap_seconds + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(cfg.max_gap_seconds - cfg.min_gap_seconds + 1)));
    };
    c.utterances.push_back({users[x].speaker_id, maker.make(users[x].interest_topics, nullptr, rng), ts});
    ts += gap();
    c.utterances.push_back({users[y].speaker_id, maker.make(users[y].interest_topics, &c.utterances[0], rng), ts});
    while (c.utterances.size() < cfg.max_turns) {
      const UserArchetype& next = users[speakers[c.utterances.size() % 2]];
      const std::vector<Utterance> ctx(c.utterances.begin(), c.utterances.end() - 1);
      const double p = propensity(ctx, c.utterances.back(), next);
      if (!rng.bernoulli(p)) break;
      ts += gap();
      c.utterances.push_back({next.speaker_id, maker.make(next.interest_topics, &c.utterances.back(), rng), ts});
    }
    convs.push_back(std::move(c));
  }
  return convs;
}

struct TurnCalibration {
  std::vector<UserArchetype> users;
  double rate_offset = 0.0;
  double achieved_mean_turns = 0.0;
};

/// Shifts every user's base_reply_rate by one common offset so that
/// `gen_dcp_corpus(users, cfg, seed)` reaches `target_mean_turns`. Bisection
/// over the offset; the oracle itself is left untouched.
inline TurnCalibration calibrate_reply_rates(const std::vector<UserArchetype>& users, const SynthConfig& cfg,
                                             std::uint64_t seed, double target_mean_turns,
                                             double tolerance = 0.005, int max_iter = 30) {
  if (target_mean_turns < 2.0 || target_mean_turns > static_cast<double>(cfg.max_turns)) {
    throw ConfigError("calibrate_reply_rates: target mean turns outside [2, max_turns]");
  }
  auto shifted = [&](double offset) {
    std::vector<UserArchetype> out = users;
    for (auto& u : out) {
      u.base_reply_rate = std::clamp(u.base_reply_rate + offset, 0.001, 0.999);
      u.profile_text = make_profile_text(u);
    }
    return out;
  };
  auto mean_turns = [&](const std::vector<UserArchetype>& us) {
    const auto convs = gen_dcp_corpus(us, cfg, seed);
    std::size_t turns = 0;
    for (const auto& c : convs) turns += c.size();
    return static_cast<double>(turns) / static_cast<double>(convs.size());
  };
  double lo = -0.5, hi = 0.5;
  TurnCalibration best{users, 0.0, mean_turns(users)};
  for (int it = 0; it < max_iter && std::abs(best.achieved_mean_turns - target_mean_turns) > tolerance; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto candidate = shifted(mid);
    const double m = mean_turns(candidate);
    if (std::abs(m - target_mean_turns) < std::abs(best.achieved_mean_turns - target_mean_turns)) {
      best = {std::move(candidate), mid, m};
    }
    (m < target_mean_turns ? lo : hi) = mid;
  }
  return best;
}

struct OracleRecord {
  std::string conv_id;
  std::size_t turn_index = 0;  // index of the utterance being answered
  std::string target_speaker;
  double propensity = 0.0;
};

/// Oracle propensity for every DCP decision point of every conversation.
inline std::vector<OracleRecord> oracle_records(const std::vector<Conversation>& convs,
                                                const std::vector<UserArchetype>& users, const OracleWeights& w) {
  std::unordered_map<std::string, const UserArchetype*> by_id;
  for (const auto& u : users) by_id[u.speaker_id] = &u;
  std::vector<OracleRecord> out;
  for (const auto& c : convs) {
    const auto parts = c.participants();
    for (std::size_t t = 1; t < c.size(); ++t) {
      const std::string& last = c.utterances[t].speaker_id;
      const std::string& target = parts[0] == last ? parts[1] : parts[0];
      auto it = by_id.find(target);
      if (it == by_id.end()) throw ConfigError("oracle_records: unknown user '" + target + "'");
      const std::vector<Utterance> ctx(c.utterances.begin(), c.utterances.begin() + static_cast<std::ptrdiff_t>(t));
      out.push_back({c.conv_id, t, target, oracle_propensity(ctx, c.utterances[t].text, *it->second, w)});
    }
  }
  return out;
}

inline std::string oracle_to_jsonl(const std::vector<OracleRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += json{{"conv_id", r.conv_id},
                {"turn_index", r.turn_index},
                {"target_speaker", r.target_speaker},
                {"propensity", r.propensity}}
               .dump() +
           "\n";
  }
  return out;
}

inline std::string archetypes_to_jsonl(const std::vector<UserArchetype>& users) {
  std::string out;
  for (const auto& u : users) {
    out += json{{"speaker_id", u.speaker_id},
                {"interest_topics", u.interest_topics},
                {"length_min", u.length_preference.min_chars},
                {"length_max", u.length_preference.max_chars},
                {"question_affinity", u.question_affinity},
                {"base_reply_rate", u.base_reply_rate},
                {"activity", u.activity},
                {"profile_text", u.profile_text}}
               .dump() +
           "\n";
  }
  return out;
}

inline std::vector<UserArchetype> load_archetypes(const fs::path& path) {
  std::vector<UserArchetype> users;
  detail::for_each_json_line(path, [&](const json& obj, const std::string& at) {
    UserArchetype u;
    u.speaker_id = detail::require_string(obj, "speaker_id", at);
    const json& topics = detail::require(obj, "interest_topics", at);
    if (!topics.is_array() || topics.empty()) throw SchemaError(at + ": field 'interest_topics' must be a non-empty array");
    for (const auto& t : topics) u.interest_topics.push_back(t.get<std::string>());
    u.length_preference = {static_cast<std::size_t>(detail::require_int(obj, "length_min", at)),
                           static_cast<std::size_t>(detail::require_int(obj, "length_max", at))};
    u.question_affinity = detail::require_number(obj, "question_affinity", at);
    u.base_reply_rate = detail::require_number(obj, "base_reply_rate", at);
    u.activity = detail::require_number(obj, "activity", at);
    u.profile_text = detail::require_string(obj, "profile_text", at);
    users.push_back(std::move(u));
  });
  return users;
}

inline std::vector<UserRecord> user_records(const std::vector<UserArchetype>& users) {
  std::vector<UserRecord> out;
  for (const auto& u : users) out.push_back({u.speaker_id, u.profile_text, false});
  return out;
}

/// 1 + 6·propensity + noise, clipped to [1, 7].
inline double interlocutor_score_from(double propensity, double noise) {
  return std::clamp(1.0 + 6.0 * propensity + noise, 1.0, 7.0);
}

/// Wizard-of-Oz style scored exchanges. Each dialogue pairs a fixed system
/// speaker ("wizard") with one user, cycling through `users`. Outsider scores
/// come from a user-independent topic-popularity function.
inline std::vector<ScoredExchange> gen_scored_corpus(const std::vector<UserArchetype>& users, std::size_t n_dialogues,
                                                     std::uint64_t seed, const SynthConfig& cfg = {}) {
  if (users.empty()) throw ConfigError("gen_scored_corpus: need at least 1 user");
  const detail::UtteranceMaker maker(cfg);
  const auto& topics = maker.topics();
  std::unordered_map<std::string, double> popularity;
  {
    Rng pop_rng(derive_seed(seed, 0x706f70));
    for (const auto& t : topics) popularity[t] = pop_rng.normal();
  }
  auto outsider_center = [&](const std::string& text) {
    double s = 0.0;
    for (const auto& tok : split_whitespace(text)) {
      if (auto it = popularity.find(tok); it != popularity.end()) s += it->second;
    }
    return 1.0 + 6.0 * logistic(1.5 * s);
  };

  std::vector<ScoredExchange> out;
  for (std::size_t d = 0; d < n_dialogues; ++d) {
    Rng rng(derive_seed(seed, 0x100000000ULL + d));
    const UserArchetype& user = users[d % users.size()];
    char id[32];
    std::snprintf(id, sizeof id, "d%04zu", d);
    std::vector<Utterance> history;
    std::int64_t ts = cfg.start_time + static_cast<std::int64_t>(d) * 86400;
    const std::vector<std::string> no_interests;
    for (std::size_t k = 0; k < cfg.exchanges_per_dialogue; ++k) {
      const Utterance* prev = history.empty() ? nullptr : &history.back();
      Utterance sys{"wizard", maker.make(no_interests, prev, rng), ts};
      ts += 10 + static_cast<std::int64_t>(rng.index(50));

      ScoredExchange e;
      e.dialogue_id = id;
      e.turn_index = static_cast<int>(k);
      e.participant_id = user.speaker_id;
      const std::size_t from = history.size() > cfg.context_window ? history.size() - cfg.context_window : 0;
      e.context.assign(history.begin() + static_cast<std::ptrdiff_t>(from), history.end());
      e.system_utterance = sys;
      const double p = oracle_propensity(e.context, sys.text, user, cfg.weights);
      e.interlocutor_score = interlocutor_score_from(p, cfg.score_noise > 0.0 ? rng.normal(0.0, cfg.score_noise) : 0.0);
      const double center = outsider_center(sys.text);
      for (std::size_t o = 0; o < cfg.n_outsiders; ++o) {
        const double v = cfg.outsider_equals_interlocutor
                             ? e.interlocutor_score
                             : std::clamp(center + rng.normal(0.0, cfg.outsider_noise), 1.0, 7.0);
        e.outsider_scores.push_back(v);
      }
      out.push_back(std::move(e));

      history.push_back(sys);
      Utterance reply{user.speaker_id, maker.make(user.interest_topics, &history.back(), rng), ts};
      ts += 10 + static_cast<std::int64_t>(rng.index(50));
      history.push_back(std::move(reply));
    }
  }
  return out;
}

enum class CorruptionMode { token_dropout, shuffle, generic_swap };

inline CorruptionMode corruption_from_string(std::string_view s) {
  if (s == "token_dropout") return CorruptionMode::token_dropout;
  if (s == "shuffle") return CorruptionMode::shuffle;
  if (s == "generic_swap") return CorruptionMode::generic_swap;
  throw ConfigError("unknown corruption mode '" + std::string(s) + "'");
}

/// Simulated system response. For token_dropout `rate` is the per-token
/// removal probability; for shuffle and generic_swap it is the probability
/// that the corruption is applied at all. At least one token always survives.
inline std::string corrupt_response(std::string_view response, CorruptionMode mode, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("corrupt_response: rate must lie in [0, 1]");
  auto tokens = split_whitespace(normalize_text(response));
  if (tokens.empty()) throw ConfigError("corrupt_response: empty response");
  auto join = [](const std::vector<std::string>& t) {
    std::string s;
    for (const auto& x : t) s += (s.empty() ? "" : " ") + x;
    return s;
  };
  switch (mode) {
    case CorruptionMode::token_dropout: {
      std::vector<std::string> kept;
      for (const auto& t : tokens) {
        if (!rng.bernoulli(rate)) kept.push_back(t);
      }
      if (kept.empty()) kept.push_back(tokens[rng.index(tokens.size())]);
      return join(kept);
    }
    case CorruptionMode::shuffle:
      if (rng.bernoulli(rate)) rng.shuffle(tokens);
      return join(tokens);
    case CorruptionMode::generic_swap:
      if (rng.bernoulli(rate)) return generic_utterances()[rng.index(generic_utterances().size())];
      return join(tokens);
  }
  return join(tokens);
}

}  // namespace dcpeval
