// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>

#include "dcpeval/metrics.hpp"
#include "dcpeval/synth.hpp"

namespace dcpeval {
namespace {

UserArchetype plain_user(double rate = 0.5) {
  UserArchetype u;
  u.speaker_id = "u";
  u.interest_topics = {"ramen", "cats"};
  u.length_preference = {100, 200};
  u.question_affinity = 0.8;
  u.base_reply_rate = rate;
  return u;
}

TEST(GenUsers, Deterministic) {
  EXPECT_EQ(archetypes_to_jsonl(gen_users(2, 7)), archetypes_to_jsonl(gen_users(2, 7)));
  EXPECT_NE(archetypes_to_jsonl(gen_users(2, 7)), archetypes_to_jsonl(gen_users(2, 8)));
}

TEST(GenUsers, StratifiedAroundHalf) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto users = gen_users(10, seed);
    std::size_t low = 0, high = 0;
    for (const auto& u : users) {
      EXPECT_GT(u.base_reply_rate, 0.0);
      EXPECT_LT(u.base_reply_rate, 1.0);
      (u.base_reply_rate < 0.5 ? low : high) += 1;
    }
    EXPECT_GE(low, 1u);
    EXPECT_GE(high, 1u);
  }
  EXPECT_THROW(gen_users(0, 1), ConfigError);
}

TEST(GenUsers, MeanRateNearDesign) {
  const SynthConfig cfg;
  const auto users = gen_users(100, 1, cfg);
  double mean = 0.0;
  for (const auto& u : users) mean += u.base_reply_rate / 100.0;
  EXPECT_NEAR(mean, 0.5 * (cfg.rate_lo + cfg.rate_hi), 0.1);
  // Half the users are uniform on [lo, 0.5), half on (0.5, hi].
  const double design = 0.5 * (0.5 * (cfg.rate_lo + 0.5)) + 0.5 * (0.5 * (0.5 + cfg.rate_hi));
  EXPECT_NEAR(mean, design, 0.01);
}

TEST(GenUsers, ProfileMentionsEveryInterestOnce) {
  for (const auto& u : gen_users(30, 4)) {
    ASSERT_FALSE(u.interest_topics.empty());
    const auto tokens = split_whitespace(u.profile_text);
    for (const auto& t : u.interest_topics) {
      EXPECT_EQ(std::count(tokens.begin(), tokens.end(), t), 1) << u.profile_text;
    }
  }
}

TEST(Oracle, NeutralInputIsHalf) {
  const auto u = plain_user(0.5);
  EXPECT_DOUBLE_EQ(oracle_propensity({}, "hello there", u), 0.5);
}

TEST(Oracle, DocumentedFormula) {
  const auto u = plain_user(0.5);
  const OracleWeights w{2.0, 1.0, 1.0, 1.0};
  const OracleFeatures f{2, true, false};
  EXPECT_NEAR(logistic(oracle_logit(f, u, w)), 0.9525741268224334, 1e-12);

  auto u2 = u;
  u2.length_preference = {1, 40};
  // "ramen and cats" has overlap 2, 14 chars in band, no question.
  EXPECT_NEAR(oracle_propensity({}, "ramen and cats", u2, w), 0.9525741268224334, 1e-12);
  EXPECT_EQ(oracle_propensity({}, "ramen and cats", u2, w), oracle_propensity({}, "ramen and cats", u2, w));
}

TEST(Oracle, QuestionTermScalesWithAffinity) {
  auto u = plain_user(0.5);
  const OracleWeights w{0.0, 0.0, 0.0, 3.0};
  EXPECT_NEAR(oracle_propensity({}, "what is this?", u, w), logistic(3.0 * 0.8), 1e-12);
  EXPECT_THROW(oracle_propensity({}, "   ", u, w), ConfigError);
}

TEST(Oracle, StrictlyIncreasingInOverlap) {
  for (const auto& u : gen_users(20, 9)) {
    for (bool band : {false, true}) {
      for (bool q : {false, true}) {
        double prev = -1.0;
        for (std::size_t k = 0; k <= 5; ++k) {
          const double p = logistic(oracle_logit({k, band, q}, u, OracleWeights{}));
          EXPECT_GE(p, 0.0);
          EXPECT_LE(p, 1.0);
          // Saturation can make consecutive doubles equal only at 1.0.
          if (prev < 1.0) EXPECT_GT(p, prev);
          prev = p;
        }
      }
    }
  }
}

TEST(GenDcpCorpus, ForcedStopGivesTwoTurns) {
  SynthConfig cfg;
  cfg.n_convs = 200;
  const auto users = gen_users(5, 1, cfg);
  const auto convs = gen_dcp_corpus(users, cfg, 3, [](const auto&, const auto&, const auto&) { return 0.0; });
  for (const auto& c : convs) EXPECT_EQ(c.size(), 2u);
}

TEST(GenDcpCorpus, AlwaysReplyHitsMaxTurns) {
  SynthConfig cfg;
  cfg.n_convs = 50;
  cfg.max_turns = 7;
  const auto users = gen_users(5, 1, cfg);
  for (const auto& c : gen_dcp_corpus(users, cfg, 3, [](const auto&, const auto&, const auto&) { return 1.0; })) {
    EXPECT_EQ(c.size(), 7u);
  }
}

TEST(GenDcpCorpus, DeterministicAndSurvivesFilter) {
  SynthConfig cfg;
  cfg.n_convs = 2000;
  const auto users = gen_users(20, 5, cfg);
  const auto a = gen_dcp_corpus(users, cfg, 11);
  EXPECT_EQ(conversations_to_jsonl(a), conversations_to_jsonl(gen_dcp_corpus(users, cfg, 11)));
  EXPECT_EQ(filter_corpus(a).conversations, a);
  EXPECT_THROW(gen_dcp_corpus({users[0]}, cfg, 1), ConfigError);
}

TEST(GenDcpCorpus, CalibratedMeanTurns) {
  SynthConfig cfg;
  cfg.n_convs = 10000;
  const auto users = gen_users(cfg.n_users, 1, cfg);
  const auto cal = calibrate_reply_rates(users, cfg, 2, 3.4);
  const auto convs = gen_dcp_corpus(cal.users, cfg, 2);
  const auto stats = corpus_stats(convs);
  EXPECT_NEAR(stats.avg_turns, 3.4, 0.2);
  EXPECT_NEAR(stats.avg_turns, cal.achieved_mean_turns, 1e-12);
}

TEST(GenDcpCorpus, EmpiricalReplyRateMatchesOracle) {
  SynthConfig cfg;
  cfg.n_convs = 20000;
  cfg.n_users = 4;
  cfg.activity_sigma = 0.0;
  const auto users = gen_users(cfg.n_users, 2, cfg);
  const auto convs = gen_dcp_corpus(users, cfg, 6);
  const auto recs = oracle_records(convs, users, cfg.weights);
  std::map<std::string, std::size_t> n, replied;
  std::map<std::string, double> mass;
  std::size_t r = 0;
  for (const auto& c : convs) {
    for (std::size_t t = 1; t < c.size(); ++t, ++r) {
      const auto& rec = recs[r];
      ASSERT_EQ(rec.turn_index, t);
      // The last turn of a max-length conversation was never decided.
      if (t + 1 == c.size() && c.size() == cfg.max_turns) continue;
      ++n[rec.target_speaker];
      replied[rec.target_speaker] += t + 1 < c.size() ? 1 : 0;
      mass[rec.target_speaker] += rec.propensity;
    }
  }
  std::size_t checked = 0;
  for (const auto& [user, count] : n) {
    if (count < 10000) continue;
    ++checked;
    const double d = static_cast<double>(count);
    EXPECT_NEAR(static_cast<double>(replied[user]) / d, mass[user] / d, 0.03) << user;
  }
  EXPECT_GE(checked, 2u);
}

TEST(GenScoredCorpus, ScoreMapping) {
  EXPECT_DOUBLE_EQ(interlocutor_score_from(0.5, 0.0), 4.0);
  EXPECT_DOUBLE_EQ(interlocutor_score_from(1.0, 0.0), 7.0);
  EXPECT_DOUBLE_EQ(interlocutor_score_from(1.0, 0.5), 7.0);
  EXPECT_DOUBLE_EQ(interlocutor_score_from(0.0, -0.5), 1.0);
}

TEST(GenScoredCorpus, NoiselessScoresFollowOracle) {
  SynthConfig cfg;
  cfg.score_noise = 0.0;
  cfg.exchanges_per_dialogue = 20;
  const auto users = gen_users(3, 1, cfg);
  for (const auto& e : gen_scored_corpus(users, 3, 8, cfg)) {
    const auto& u = *std::find_if(users.begin(), users.end(),
                                  [&](const UserArchetype& x) { return x.speaker_id == e.participant_id; });
    EXPECT_NEAR(e.interlocutor_score, 1.0 + 6.0 * oracle_propensity(e.context, e.system_utterance.text, u), 1e-12);
    EXPECT_EQ(e.outsider_scores.size(), 5u);
    EXPECT_LE(e.context.size(), cfg.context_window);
  }
}

TEST(GenScoredCorpus, OutsidersWeaklyCorrelated) {
  SynthConfig cfg;
  cfg.exchanges_per_dialogue = 50;
  const auto users = gen_users(20, 3, cfg);
  const auto ex = gen_scored_corpus(users, 20, 4, cfg);
  ASSERT_EQ(ex.size(), 1000u);
  std::vector<double> outsider, interlocutor;
  for (const auto& e : ex) {
    outsider.push_back(e.outsider_mean());
    interlocutor.push_back(e.interlocutor_score);
    EXPECT_GE(e.interlocutor_score, 1.0);
    EXPECT_LE(e.interlocutor_score, 7.0);
  }
  const auto r = pearson(outsider, interlocutor);
  ASSERT_TRUE(r.has_value());
  EXPECT_LT(*r, 0.3);
}

TEST(Corrupt, Examples) {
  Rng rng(1);
  EXPECT_EQ(corrupt_response("a b c d", CorruptionMode::token_dropout, 0.0, rng), "a b c d");
  EXPECT_EQ(corrupt_response("word", CorruptionMode::shuffle, 1.0, rng), "word");
  EXPECT_FALSE(corrupt_response("a b", CorruptionMode::token_dropout, 1.0, rng).empty());
  const auto g = corrupt_response("a b", CorruptionMode::generic_swap, 1.0, rng);
  EXPECT_NE(std::find(generic_utterances().begin(), generic_utterances().end(), g), generic_utterances().end());
  EXPECT_THROW(corrupt_response("a", CorruptionMode::shuffle, 1.5, rng), ConfigError);
  EXPECT_THROW(corruption_from_string("blur"), ConfigError);
}

TEST(Corrupt, DropoutRateOverManyTokens) {
  std::string text;
  for (int i = 0; i < 10000; ++i) text += "t" + std::to_string(i) + " ";
  Rng rng(5);
  const auto out = split_whitespace(corrupt_response(text, CorruptionMode::token_dropout, 0.5, rng));
  const double removed = 1.0 - static_cast<double>(out.size()) / 10000.0;
  EXPECT_NEAR(removed, 0.5, 0.02);
}

TEST(Corrupt, ShuffleKeepsMultiset) {
  Rng rng(2);
  auto out = split_whitespace(corrupt_response("a b c d e f", CorruptionMode::shuffle, 1.0, rng));
  std::sort(out.begin(), out.end());
  EXPECT_EQ(out, (std::vector<std::string>{"a", "b", "c", "d", "e", "f"}));
}

}  // namespace
}  // namespace dcpeval
