// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcpeval/corpus.hpp"
#include "dcpeval/dcp_data.hpp"
#include "dcpeval/encoder.hpp"
#include "dcpeval/error.hpp"
#include "dcpeval/rng.hpp"
#include "dcpeval/train.hpp"

namespace dcpeval {

// ---------------------------------------------------------------------------
// Majority baselines

struct MajorityModel {
  int global_label = 1;
  std::map<std::string, int> per_user_label;
  std::map<std::string, std::array<std::size_t, 2>> per_user_counts;  // [#label0, #label1]

  nlohmann::json to_json() const {
    nlohmann::json users = nlohmann::json::object();
    for (const auto& [u, l] : per_user_label) users[u] = l;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [u, c] : per_user_counts) counts[u] = {c[0], c[1]};
    return {{"global_label", global_label}, {"per_user_label", users}, {"per_user_counts", counts}};
  }

  static MajorityModel from_json(const nlohmann::json& j) {
    MajorityModel m;
    m.global_label = j.at("global_label").get<int>();
    for (const auto& [u, l] : j.at("per_user_label").items()) m.per_user_label[u] = l.get<int>();
    if (j.contains("per_user_counts")) {
      for (const auto& [u, c] : j.at("per_user_counts").items()) m.per_user_counts[u] = {c.at(0), c.at(1)};
    }
    return m;
  }
};

enum class MajorityScope { global, per_user };

/// Majority label overall and per target speaker; ties go to label 1.
inline MajorityModel fit_majority(const std::vector<DcpSample>& train) {
  if (train.empty()) throw ConfigError("fit_majority: empty training set");
  MajorityModel m;
  std::array<std::size_t, 2> total{};
  for (const auto& s : train) {
    const auto y = static_cast<std::size_t>(s.label == 1);
    ++total[y];
    ++m.per_user_counts[s.target_speaker][y];
  }
  m.global_label = total[1] >= total[0] ? 1 : 0;
  for (const auto& [u, c] : m.per_user_counts) m.per_user_label[u] = c[1] >= c[0] ? 1 : 0;
  return m;
}

/// Users unseen in training fall back to the global label.
inline int predict_majority(const MajorityModel& m, const DcpSample& s, MajorityScope scope) {
  if (scope == MajorityScope::global) return m.global_label;
  auto it = m.per_user_label.find(s.target_speaker);
  return it == m.per_user_label.end() ? m.global_label : it->second;
}

// ---------------------------------------------------------------------------
// Context/response pairs with random negatives

struct ResponsePair {
  std::vector<Utterance> context;
  Utterance response;
  int label = 1;
  std::string conv_id;           // conversation of the context
  std::string response_conv_id;  // conversation the response text came from
};

/// Positives are every (u_0..u_{t-1}, u_t) with t >= 1. Each positive gets one
/// negative whose response text is drawn uniformly from the utterances of the
/// other conversations. The negative keeps the true responder's speaker id,
/// so only the text differs between a positive and its negative.
inline std::vector<ResponsePair> build_random_negatives(const std::vector<Conversation>& convs, std::uint64_t seed) {
  if (convs.size() < 2) throw ConfigError("build_random_negatives: need at least 2 conversations to avoid self-pairing");
  struct Ref {
    std::size_t conv;
    std::size_t utt;
  };
  std::vector<Ref> pool;
  for (std::size_t c = 0; c < convs.size(); ++c) {
    for (std::size_t u = 0; u < convs[c].size(); ++u) pool.push_back({c, u});
  }
  for (std::size_t c = 0; c < convs.size(); ++c) {
    if (convs[c].size() == pool.size()) throw ConfigError("build_random_negatives: only one conversation has utterances");
  }
  Rng rng(derive_seed(seed, 0x6e6567));
  std::vector<ResponsePair> out;
  for (std::size_t c = 0; c < convs.size(); ++c) {
    const auto& conv = convs[c];
    for (std::size_t t = 1; t < conv.size(); ++t) {
      ResponsePair pos;
      pos.context.assign(conv.utterances.begin(), conv.utterances.begin() + static_cast<std::ptrdiff_t>(t));
      pos.response = conv.utterances[t];
      pos.conv_id = conv.conv_id;
      pos.response_conv_id = conv.conv_id;
      Ref r = pool[rng.index(pool.size())];
      while (r.conv == c) r = pool[rng.index(pool.size())];
      ResponsePair neg = pos;
      neg.label = 0;
      neg.response.text = convs[r.conv].utterances[r.utt].text;
      neg.response_conv_id = convs[r.conv].conv_id;
      out.push_back(std::move(pos));
      out.push_back(std::move(neg));
    }
  }
  return out;
}

/// Context and final utterance of a DCP sample, as scored by the pair models.
inline std::pair<std::vector<Utterance>, Utterance> split_last(const DcpSample& s) {
  if (s.context.size() < 2) throw ConfigError("pair scoring needs a context of at least 2 utterances");
  std::vector<Utterance> ctx(s.context.begin(), s.context.end() - 1);
  return {std::move(ctx), s.context.back()};
}

inline Example nsp_example(const std::vector<Utterance>& context, const Utterance& response, const Vocabulary& vocab,
                           std::size_t max_len, float target = 0.0f) {
  Example e;
  e.ids = serialize_pair(context, response, vocab, max_len);
  e.target = target;
  return e;
}

inline Example ruber_example(const std::vector<Utterance>& context, const Utterance& response, const Vocabulary& vocab,
                             std::size_t max_len, float target = 0.0f) {
  Example e;
  e.ids = serialize_segment(context, vocab, max_len);
  e.ids_b = serialize_segment({response}, vocab, max_len);
  e.target = target;
  return e;
}

enum class PairModelKind { nsp, ruber };

inline std::vector<Example> pair_examples(const std::vector<ResponsePair>& pairs, PairModelKind kind,
                                          const Vocabulary& vocab, std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto y = static_cast<float>(p.label);
    out.push_back(kind == PairModelKind::nsp ? nsp_example(p.context, p.response, vocab, max_len, y)
                                             : ruber_example(p.context, p.response, vocab, max_len, y));
  }
  return out;
}

namespace detail {

inline TrainResult<float> train_pair_model(PairModelKind kind, const std::vector<ResponsePair>& train_pairs,
                                           const std::vector<ResponsePair>& val_pairs, const Vocabulary& vocab,
                                           EncoderConfig enc, const TrainConfig& tc) {
  enc.vocab_size = vocab.size();
  enc.head = kind == PairModelKind::nsp ? HeadKind::classification : HeadKind::ruber;
  const auto tr = pair_examples(train_pairs, kind, vocab, enc.max_len);
  const auto va = pair_examples(val_pairs, kind, vocab, enc.max_len);
  return train(Model<float>(enc), tr, va, tc, kind == PairModelKind::nsp ? "nsp" : "ruber");
}

}  // namespace detail

/// Cross-encoder over "CLS context SEP response SEP" with a classification head.
inline TrainResult<float> train_nsp(const std::vector<ResponsePair>& train_pairs,
                                    const std::vector<ResponsePair>& val_pairs, const Vocabulary& vocab,
                                    const EncoderConfig& enc, const TrainConfig& tc) {
  return detail::train_pair_model(PairModelKind::nsp, train_pairs, val_pairs, vocab, enc, tc);
}

/// Bi-encoder: shared trunk on context and response, scorer over [c; r; c⊙r; |c−r|].
inline TrainResult<float> train_ruber(const std::vector<ResponsePair>& train_pairs,
                                      const std::vector<ResponsePair>& val_pairs, const Vocabulary& vocab,
                                      const EncoderConfig& enc, const TrainConfig& tc) {
  return detail::train_pair_model(PairModelKind::ruber, train_pairs, val_pairs, vocab, enc, tc);
}

/// Scores DCP samples with a pair model. The target speaker is never read.
inline std::vector<double> pair_scores(const Model<float>& model, const std::vector<DcpSample>& samples,
                                       const Vocabulary& vocab) {
  const auto kind = model.config().head == HeadKind::ruber ? PairModelKind::ruber : PairModelKind::nsp;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto [ctx, resp] = split_last(s);
    const Example e = kind == PairModelKind::nsp ? nsp_example(ctx, resp, vocab, model.config().max_len)
                                                 : ruber_example(ctx, resp, vocab, model.config().max_len);
    out.push_back(static_cast<double>(model.predict(e)));
  }
  return out;
}

}  // namespace dcpeval
