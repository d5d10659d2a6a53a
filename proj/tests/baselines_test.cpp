// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "dcpeval/baselines.hpp"
#include "test_util.hpp"

namespace dcpeval {
namespace {

using testing::alternating;
using testing::conv;

DcpSample sample(const std::string& user, int label) {
  DcpSample s;
  s.context = {{"x", "hi", 0}, {user, "yo", 60}};
  s.target_speaker = "x";
  s.label = label;
  return s;
}

TEST(Majority, Examples) {
  auto m = fit_majority({sample("a", 1), sample("a", 1), sample("a", 0)});
  EXPECT_EQ(m.global_label, 1);

  std::vector<DcpSample> train;
  for (int y : {0, 0, 1}) train.push_back(sample("", y)), train.back().target_speaker = "A";
  for (int y : {1, 1}) train.push_back(sample("", y)), train.back().target_speaker = "B";
  m = fit_majority(train);
  EXPECT_EQ(m.per_user_label.at("A"), 0);
  EXPECT_EQ(m.per_user_label.at("B"), 1);
  auto probe = sample("", 0);
  probe.target_speaker = "A";
  EXPECT_EQ(predict_majority(m, probe, MajorityScope::per_user), 0);
  EXPECT_EQ(predict_majority(m, probe, MajorityScope::global), 1);
  probe.target_speaker = "stranger";
  EXPECT_EQ(predict_majority(m, probe, MajorityScope::per_user), m.global_label);
}

TEST(Majority, TiesGoToOneAndJsonRoundTrip) {
  std::vector<DcpSample> train{sample("", 1), sample("", 0)};
  const auto m = fit_majority(train);
  EXPECT_EQ(m.global_label, 1);
  EXPECT_EQ(m.per_user_label.at("x"), 1);
  const auto back = MajorityModel::from_json(m.to_json());
  EXPECT_EQ(back.per_user_label, m.per_user_label);
  EXPECT_EQ(back.per_user_counts, m.per_user_counts);
  EXPECT_THROW(fit_majority({}), ConfigError);
}

TEST(Majority, PrivateBeatsGlobalWhenUsersStraddle) {
  std::vector<DcpSample> data;
  for (int i = 0; i < 30; ++i) {
    auto s = sample("", i % 10 < 8 ? 1 : 0);
    s.target_speaker = "talker";
    data.push_back(s);
    s = sample("", i % 10 < 7 ? 0 : 1);
    s.target_speaker = "quiet";
    data.push_back(s);
  }
  const auto m = fit_majority(data);
  std::size_t g = 0, p = 0;
  for (const auto& s : data) {
    g += predict_majority(m, s, MajorityScope::global) == s.label;
    p += predict_majority(m, s, MajorityScope::per_user) == s.label;
  }
  EXPECT_GT(p, g);
}

TEST(Negatives, TwoConversations) {
  const std::vector<Conversation> convs{conv("c1", {{"a", "hello"}, {"b", "hi"}, {"a", "bye"}}),
                                        conv("c2", {{"c", "morning"}, {"d", "evening"}})};
  const auto pairs = build_random_negatives(convs, 3);
  ASSERT_EQ(pairs.size(), 6u);
  std::size_t pos = 0, neg = 0;
  for (const auto& p : pairs) {
    if (p.label == 1) {
      ++pos;
      EXPECT_EQ(p.response_conv_id, p.conv_id);
      continue;
    }
    ++neg;
    EXPECT_NE(p.response_conv_id, p.conv_id);
    const auto& other = p.conv_id == "c1" ? convs[1] : convs[0];
    const bool from_other = std::any_of(other.utterances.begin(), other.utterances.end(),
                                        [&](const Utterance& u) { return u.text == p.response.text; });
    EXPECT_TRUE(from_other) << p.response.text;
  }
  EXPECT_EQ(pos, neg);
}

TEST(Negatives, KeepSpeakerAndDeterministic) {
  std::vector<Conversation> convs;
  for (int i = 0; i < 20; ++i) convs.push_back(alternating("c" + std::to_string(i), "a" + std::to_string(i), "b", 2 + i % 4));
  const auto a = build_random_negatives(convs, 9);
  const auto b = build_random_negatives(convs, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); i += 2) {
    EXPECT_EQ(a[i].label, 1);
    EXPECT_EQ(a[i + 1].label, 0);
    EXPECT_EQ(a[i + 1].response.speaker_id, a[i].response.speaker_id);
    EXPECT_EQ(a[i + 1].response.timestamp, a[i].response.timestamp);
    EXPECT_EQ(a[i + 1].response.text, b[i + 1].response.text);
  }
  const auto c = build_random_negatives(convs, 10);
  std::size_t differ = 0;
  for (std::size_t i = 1; i < a.size(); i += 2) differ += a[i].response.text != c[i].response.text;
  EXPECT_GT(differ, 0u);
  EXPECT_THROW(build_random_negatives({convs[0]}, 1), ConfigError);
}

TEST(PairScoring, SplitLast) {
  const auto s = sample("b", 1);
  const auto [ctx, resp] = split_last(s);
  ASSERT_EQ(ctx.size(), 1u);
  EXPECT_EQ(resp.text, "yo");
  DcpSample tiny;
  tiny.context = {{"a", "x", 0}};
  EXPECT_THROW(split_last(tiny), ConfigError);
}

// Every conversation repeats one topic word; negatives usually carry another.
struct TopicCorpus {
  std::vector<Conversation> train, val;
  Vocabulary vocab;
};

TopicCorpus topic_corpus() {
  TopicCorpus tc;
  Rng rng(4);
  auto make = [&](const std::string& id) {
    const std::string topic = "topic" + std::to_string(rng.index(10));
    Conversation c{id, {}};
    const std::size_t n = 2 + rng.index(3);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string filler = "w" + std::to_string(rng.index(20));
      c.utterances.push_back({i % 2 ? "b" : "a", filler + " " + topic + " " + filler, static_cast<std::int64_t>(60 * i)});
    }
    return c;
  };
  for (int i = 0; i < 800; ++i) tc.train.push_back(make("t" + std::to_string(i)));
  for (int i = 0; i < 60; ++i) tc.val.push_back(make("v" + std::to_string(i)));
  tc.vocab = build_vocab(tc.train, {}, 1);
  return tc;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.d_model = 32;
  e.n_layers = 1;
  e.n_heads = 2;
  e.d_ff = 64;
  e.max_len = 24;
  e.dropout = 0.0;
  e.seed = 1;
  return e;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig t;
  t.learning_rate = 3e-3;
  t.batch_size = 16;
  t.epochs = epochs;
  t.seed = 2;
  return t;
}

double pair_accuracy(const Model<float>& m, const std::vector<ResponsePair>& pairs, PairModelKind kind,
                     const Vocabulary& vocab) {
  const auto ex = pair_examples(pairs, kind, vocab, m.config().max_len);
  std::size_t ok = 0;
  for (const auto& e : ex) ok += (m.predict(e) >= 0.5f) == (e.target > 0.5f);
  return static_cast<double>(ok) / static_cast<double>(ex.size());
}

class PairModels : public ::testing::TestWithParam<PairModelKind> {};

TEST_P(PairModels, LearnTopicMatching) {
  const auto kind = GetParam();
  const auto tc = topic_corpus();
  const auto tr = build_random_negatives(tc.train, 1);
  const auto va = build_random_negatives(tc.val, 2);
  const auto res = kind == PairModelKind::nsp ? train_nsp(tr, va, tc.vocab, small_encoder(), quick_train(15))
                                              : train_ruber(tr, va, tc.vocab, small_encoder(), quick_train(15));
  // About one negative in ten shares the topic, so the ceiling is near 0.95.
  EXPECT_GE(pair_accuracy(res.model, va, kind, tc.vocab), 0.85);
}

TEST_P(PairModels, ZeroEpochsPredictHalfAndScoresIgnoreTarget) {
  const auto kind = GetParam();
  const auto tc = topic_corpus();
  const auto tr = build_random_negatives(tc.train, 1);
  auto cfg = small_encoder();
  const auto fresh = kind == PairModelKind::nsp ? train_nsp(tr, tr, tc.vocab, cfg, quick_train(0))
                                                : train_ruber(tr, tr, tc.vocab, cfg, quick_train(0));
  auto samples = build_dcp_samples(tc.val);
  for (double s : pair_scores(fresh.model, samples, tc.vocab)) EXPECT_DOUBLE_EQ(s, 0.5);

  const auto trained = kind == PairModelKind::nsp ? train_nsp(tr, tr, tc.vocab, cfg, quick_train(1))
                                                  : train_ruber(tr, tr, tc.vocab, cfg, quick_train(1));
  const auto before = pair_scores(trained.model, samples, tc.vocab);
  for (auto& s : samples) s.target_speaker = "someone else";
  EXPECT_EQ(pair_scores(trained.model, samples, tc.vocab), before);

  const auto again = kind == PairModelKind::nsp ? train_nsp(tr, tr, tc.vocab, cfg, quick_train(1))
                                                : train_ruber(tr, tr, tc.vocab, cfg, quick_train(1));
  EXPECT_EQ(pair_scores(again.model, samples, tc.vocab), before);
}

INSTANTIATE_TEST_SUITE_P(Kinds, PairModels, ::testing::Values(PairModelKind::nsp, PairModelKind::ruber),
                         [](const auto& info) { return info.param == PairModelKind::nsp ? "Nsp" : "Ruber"; });

}  // namespace
}  // namespace dcpeval
