// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dcpeval/baselines.hpp"
#include "dcpeval/checkpoint.hpp"
#include "dcpeval/config.hpp"
#include "dcpeval/corpus.hpp"
#include "dcpeval/dcp_data.hpp"
#include "dcpeval/encoder.hpp"
#include "dcpeval/io.hpp"
#include "dcpeval/metrics.hpp"
#include "dcpeval/report.hpp"
#include "dcpeval/synth.hpp"
#include "dcpeval/train.hpp"

namespace dcpeval {

// ---------------------------------------------------------------------------
// Config readers

inline std::uint64_t read_seed(const FlatConfig& cfg) {
  const long long s = cfg.get_int("seed", -1);
  if (s < 0) throw ConfigError("config must set a non-negative integer 'seed'");
  return static_cast<std::uint64_t>(s);
}

inline std::size_t get_size(const FlatConfig& cfg, const std::string& key, std::size_t fallback) {
  const long long v = cfg.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

inline SynthConfig read_synth_config(const FlatConfig& cfg) {
  SynthConfig s;
  s.n_users = get_size(cfg, "synth.n_users", s.n_users);
  s.n_convs = get_size(cfg, "synth.n_convs", s.n_convs);
  s.n_topics = get_size(cfg, "synth.n_topics", s.n_topics);
  s.min_interests = get_size(cfg, "synth.min_interests", s.min_interests);
  s.max_interests = get_size(cfg, "synth.max_interests", s.max_interests);
  s.rate_lo = cfg.get_double("synth.rate_lo", s.rate_lo);
  s.rate_hi = cfg.get_double("synth.rate_hi", s.rate_hi);
  s.activity_sigma = cfg.get_double("synth.activity_sigma", s.activity_sigma);
  s.homogeneous = cfg.get_bool("synth.homogeneous", s.homogeneous);
  s.max_turns = get_size(cfg, "synth.max_turns", s.max_turns);
  s.p_echo = cfg.get_double("synth.p_echo", s.p_echo);
  s.p_own = cfg.get_double("synth.p_own", s.p_own);
  s.p_question = cfg.get_double("synth.p_question", s.p_question);
  s.weights.rate = cfg.get_double("oracle.w_rate", s.weights.rate);
  s.weights.overlap = cfg.get_double("oracle.w_overlap", s.weights.overlap);
  s.weights.band = cfg.get_double("oracle.w_band", s.weights.band);
  s.weights.question = cfg.get_double("oracle.w_question", s.weights.question);
  s.exchanges_per_dialogue = get_size(cfg, "scored.exchanges_per_dialogue", s.exchanges_per_dialogue);
  s.context_window = get_size(cfg, "scored.context_window", s.context_window);
  s.score_noise = cfg.get_double("scored.score_noise", s.score_noise);
  s.n_outsiders = get_size(cfg, "scored.n_outsiders", s.n_outsiders);
  s.outsider_noise = cfg.get_double("scored.outsider_noise", s.outsider_noise);
  s.outsider_equals_interlocutor = cfg.get_bool("scored.outsider_equals_interlocutor", s.outsider_equals_interlocutor);
  return s;
}

inline OracleWeights read_oracle_weights(const FlatConfig& cfg) {
  OracleWeights w;
  w.rate = cfg.get_double("oracle.w_rate", w.rate);
  w.overlap = cfg.get_double("oracle.w_overlap", w.overlap);
  w.band = cfg.get_double("oracle.w_band", w.band);
  w.question = cfg.get_double("oracle.w_question", w.question);
  return w;
}

inline EncoderConfig read_encoder_config(const FlatConfig& cfg, HeadKind head, std::uint64_t seed) {
  EncoderConfig e;
  e.d_model = get_size(cfg, "model.d_model", e.d_model);
  e.n_layers = get_size(cfg, "model.n_layers", e.n_layers);
  e.n_heads = get_size(cfg, "model.n_heads", e.n_heads);
  e.d_ff = get_size(cfg, "model.d_ff", e.d_ff);
  e.max_len = get_size(cfg, "model.max_len", e.max_len);
  e.dropout = cfg.get_double("model.dropout", e.dropout);
  e.head = head;
  e.seed = derive_seed(seed, 0x6d6f64656c);
  e.vocab_size = 1;
  e.validate();
  return e;
}

inline TrainConfig read_train_config(const FlatConfig& cfg, bool regression, std::uint64_t seed) {
  const std::string preset = cfg.get_string("train.preset", "desk");
  TrainConfig t;
  if (preset == "fine_tuning") {
    t = TrainConfig::fine_tuning_preset(regression);
  } else if (preset == "desk") {
    t.epochs = regression ? 10 : 5;
  } else {
    throw ConfigError("train.preset must be 'desk' or 'fine_tuning'");
  }
  t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
  t.batch_size = get_size(cfg, "train.batch_size", t.batch_size);
  t.epochs = get_size(cfg, "train.epochs", t.epochs);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.grad_clip = cfg.get_double("train.grad_clip", t.grad_clip);
  t.seed = derive_seed(seed, 0x747261696e);
  t.validate();
  return t;
}

inline std::string ratio_text(const StatsReport& s) {
  return fmt_num(static_cast<double>(s.replied) / static_cast<double>(std::max<std::size_t>(1, s.no_replied)), 3);
}

inline Table stats_table(const std::vector<std::pair<std::string, StatsReport>>& parts) {
  Table t;
  t.title = "Corpus statistics";
  t.header = {"Split", "Conversations", "Avg. turns", "Avg. chars per turn", "Avg. chars per dialogue", "Replied",
              "No replied", "Replied : no replied"};
  for (const auto& [name, s] : parts) {
    t.add_row({name, std::to_string(s.conversations), fmt_num(s.avg_turns, 2), fmt_num(s.avg_chars_per_turn, 1),
               fmt_num(s.avg_chars_per_dialogue, 1), std::to_string(s.replied), std::to_string(s.no_replied),
               ratio_text(s)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// synth

struct SynthSummary {
  StatsReport stats;
  double rate_offset = 0.0;
  double achieved_mean_turns = 0.0;
  std::size_t n_scored_exchanges = 0;
};

/// Writes conversations.jsonl, users.jsonl, archetypes.jsonl, oracle.jsonl,
/// scored.jsonl and stats.{csv,md} to `out`.
inline SynthSummary run_synth(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  const SynthConfig sc = read_synth_config(cfg);
  const double target = cfg.get_double("synth.target_mean_turns", 3.43);
  const std::size_t scored_users = get_size(cfg, "scored.n_users", 20);
  const std::size_t scored_dialogues = get_size(cfg, "scored.n_dialogues", 40);
  cfg.check_all_used();

  auto users = gen_users(sc.n_users, derive_seed(seed, 1), sc);
  const std::uint64_t corpus_seed = derive_seed(seed, 2);
  SynthSummary sum;
  if (target > 0.0) {
    auto cal = calibrate_reply_rates(users, sc, corpus_seed, target);
    users = std::move(cal.users);
    sum.rate_offset = cal.rate_offset;
    spdlog::info("synth: reply-rate offset {:.4f} gives mean turns {:.3f}", cal.rate_offset, cal.achieved_mean_turns);
  }
  const auto convs = gen_dcp_corpus(users, sc, corpus_seed);
  const std::vector<UserArchetype> scored_pool(users.begin(),
                                               users.begin() + static_cast<std::ptrdiff_t>(std::min(scored_users, users.size())));
  const auto scored = gen_scored_corpus(scored_pool, scored_dialogues, derive_seed(seed, 3), sc);

  sum.stats = corpus_stats(convs);
  sum.achieved_mean_turns = sum.stats.avg_turns;
  sum.n_scored_exchanges = scored.size();

  write_file_atomic(out / "conversations.jsonl", conversations_to_jsonl(convs));
  write_file_atomic(out / "users.jsonl", users_to_jsonl(user_records(users)));
  write_file_atomic(out / "archetypes.jsonl", archetypes_to_jsonl(users));
  write_file_atomic(out / "oracle.jsonl", oracle_to_jsonl(oracle_records(convs, users, sc.weights)));
  write_file_atomic(out / "scored.jsonl", scored_to_jsonl(scored));
  write_report(out, "stats", stats_table({{"all", sum.stats}}), {"synth", cfg.hash(), seed});
  return sum;
}

// ---------------------------------------------------------------------------
// ingest / build

inline FilterConfig read_filter_config(const FlatConfig& cfg) {
  FilterConfig f;
  f.max_reply_gap_seconds = cfg.get_int("filter.max_reply_gap_seconds", f.max_reply_gap_seconds);
  f.bot_threshold = cfg.get_double("filter.bot_threshold", f.bot_threshold);
  f.bot_min_utterances = get_size(cfg, "filter.bot_min_utterances", f.bot_min_utterances);
  return f;
}

inline Corpus load_corpus(const FlatConfig& cfg) {
  const fs::path conv_path = cfg.require_string("corpus.conversations");
  const std::string users_path = cfg.get_string("corpus.users", "");
  const std::size_t max_profile = get_size(cfg, "corpus.max_profile_chars", 300);
  Corpus corpus = load_conversations(conv_path);
  if (!users_path.empty()) attach_profiles(corpus, load_users(users_path, max_profile));
  return corpus;
}

inline nlohmann::json filter_report_json(const FilterReport& r) {
  return {{"input_conversations", r.input_conversations},
          {"empty_utterances_removed", r.empty_utterances_removed},
          {"utterances_merged", r.utterances_merged},
          {"dropped_gap", r.dropped_gap},
          {"dropped_bot", r.dropped_bot},
          {"bot_users", r.bot_users},
          {"dropped_structure", r.dropped_structure},
          {"dropped_short", r.dropped_short},
          {"output_conversations", r.output_conversations}};
}

struct IngestSummary {
  FilterReport filter;
  StatsReport stats;
};

/// Loads and filters a corpus; writes the filtered conversations and users.
inline IngestSummary run_ingest(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  Corpus corpus = load_corpus(cfg);
  const FilterConfig fc = read_filter_config(cfg);
  cfg.check_all_used();
  auto filtered = filter_corpus(corpus.conversations, fc);
  IngestSummary sum{filtered.report, corpus_stats(filtered.conversations)};
  write_file_atomic(out / "conversations.jsonl", conversations_to_jsonl(filtered.conversations));
  write_file_atomic(out / "users.jsonl", users_to_jsonl(corpus.users));
  write_file_atomic(out / "filter_report.json", filter_report_json(filtered.report).dump(2) + "\n");
  write_report(out, "stats", stats_table({{"filtered", sum.stats}}), {"ingest", cfg.hash(), seed});
  return sum;
}

struct BuiltData {
  std::vector<UserRecord> users;
  CorpusSplit<Conversation> convs;
  std::vector<DcpSample> train, validation, test;
  Vocabulary vocab;
  FilterReport filter;
};

/// Filter, time split, per-user cap on the training split, DCP samples and
/// the training vocabulary.
inline BuiltData build_data(const FlatConfig& cfg) {
  Corpus corpus = load_corpus(cfg);
  const FilterConfig fc = read_filter_config(cfg);
  const double test_fraction = cfg.get_double("split.test_fraction", 0.2);
  const double val_fraction = cfg.get_double("split.validation_fraction", 0.05);
  const bool explicit_bounds = cfg.has("split.boundary_a") || cfg.has("split.boundary_b");
  const long long ba = cfg.get_int("split.boundary_a", 0);
  const long long bb = cfg.get_int("split.boundary_b", 0);
  const std::size_t cap = get_size(cfg, "data.cap_per_user", 0);
  const std::size_t min_freq = get_size(cfg, "data.min_freq", 1);
  const TokenizerKind tok = tokenizer_from_string(cfg.get_string("data.tokenizer", "whitespace"));

  BuiltData d;
  auto filtered = filter_corpus(corpus.conversations, fc);
  d.filter = filtered.report;
  if (filtered.conversations.empty()) throw ConfigError("build: no conversations survive filtering");
  const auto bounds = explicit_bounds ? std::pair<std::int64_t, std::int64_t>{ba, bb}
                                      : default_time_boundaries(filtered.conversations, test_fraction, val_fraction);
  d.convs = split_time(filtered.conversations, bounds.first, bounds.second);
  if (cap > 0) d.convs.train = cap_per_user(d.convs.train, cap);
  if (d.convs.train.empty() || d.convs.validation.empty() || d.convs.test.empty()) {
    throw ConfigError("build: a split is empty (train " + std::to_string(d.convs.train.size()) + ", validation " +
                      std::to_string(d.convs.validation.size()) + ", test " + std::to_string(d.convs.test.size()) + ")");
  }
  d.train = build_dcp_samples(d.convs.train);
  d.validation = build_dcp_samples(d.convs.validation);
  d.test = build_dcp_samples(d.convs.test);
  d.users = corpus.users;
  d.vocab = build_vocab(d.convs.train, d.users, min_freq, tok);
  return d;
}

inline std::unordered_map<std::string, const UserRecord*> index_users(const std::vector<UserRecord>& users) {
  std::unordered_map<std::string, const UserRecord*> by_id;
  for (const auto& u : users) by_id[u.speaker_id] = &u;
  return by_id;
}

inline std::vector<Example> dcp_examples(const std::vector<DcpSample>& samples, PersonalizationMode mode,
                                         const std::unordered_map<std::string, const UserRecord*>& users,
                                         const Vocabulary& vocab, std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto it = users.find(s.target_speaker);
    Example e;
    e.ids = serialize(s, mode, it == users.end() ? nullptr : it->second, vocab, max_len).ids;
    e.target = static_cast<float>(s.label);
    out.push_back(std::move(e));
  }
  return out;
}

inline std::map<std::string, std::size_t> training_counts(const std::vector<DcpSample>& train) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : train) ++counts[s.target_speaker];
  return counts;
}

/// Writes splits/, users.jsonl, vocab.json, train_counts.json and one dataset
/// cache per personalization mode and split under data/<mode>/.
inline void save_built(const BuiltData& d, const fs::path& out, std::size_t max_len, const Provenance& prov) {
  write_file_atomic(out / "splits" / "train.jsonl", conversations_to_jsonl(d.convs.train));
  write_file_atomic(out / "splits" / "validation.jsonl", conversations_to_jsonl(d.convs.validation));
  write_file_atomic(out / "splits" / "test.jsonl", conversations_to_jsonl(d.convs.test));
  write_file_atomic(out / "users.jsonl", users_to_jsonl(d.users));
  d.vocab.save(out / "vocab.json");
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [u, n] : training_counts(d.train)) counts[u] = n;
  write_file_atomic(out / "train_counts.json", counts.dump(1) + "\n");
  write_file_atomic(out / "filter_report.json", filter_report_json(d.filter).dump(2) + "\n");
  const auto users = index_users(d.users);
  for (auto mode : kAllModes) {
    const std::pair<const char*, const std::vector<DcpSample>*> parts[] = {
        {"train", &d.train}, {"validation", &d.validation}, {"test", &d.test}};
    for (const auto& [name, samples] : parts) {
      std::vector<CachedRecord> recs;
      recs.reserve(samples->size());
      for (const auto& s : *samples) {
        auto it = users.find(s.target_speaker);
        recs.push_back({serialize(s, mode, it == users.end() ? nullptr : it->second, d.vocab, max_len).ids,
                        static_cast<std::uint8_t>(s.label), s.target_speaker});
      }
      write_dataset_cache(out / "data" / std::string(to_string(mode)) / (std::string(name) + ".dcpd"), recs);
    }
  }
  write_report(out, "stats",
               stats_table({{"train", corpus_stats(d.convs.train)},
                            {"validation", corpus_stats(d.convs.validation)},
                            {"test", corpus_stats(d.convs.test)}}),
               prov);
}

struct BuildSummary {
  std::size_t n_train = 0, n_validation = 0, n_test = 0;
  std::size_t vocab_size = 0;
};

inline BuildSummary run_build(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  BuiltData d = build_data(cfg);
  const std::size_t max_len = get_size(cfg, "model.max_len", EncoderConfig{}.max_len);
  cfg.check_all_used();
  save_built(d, out, max_len, {"build", cfg.hash(), seed});
  return {d.train.size(), d.validation.size(), d.test.size(), d.vocab.size()};
}

// ---------------------------------------------------------------------------
// dcp-grid

inline std::string dcp_model_name(PersonalizationMode m) { return "dcp_" + std::string(to_string(m)); }

inline std::string dcp_row_label(PersonalizationMode m) {
  switch (m) {
    case PersonalizationMode::none: return "DCP";
    case PersonalizationMode::user_token: return "DCP + user token";
    case PersonalizationMode::profile: return "DCP + profile";
    case PersonalizationMode::both: return "DCP + both";
  }
  return "DCP";
}

struct GridRow {
  std::string name;   // row label
  std::string model;  // model directory, empty for majorities
  EvalReport report;
};

struct DcpGridResult {
  std::vector<GridRow> rows;

  const GridRow& row(const std::string& model_or_label) const {
    for (const auto& r : rows) {
      if (r.model == model_or_label || r.name == model_or_label) return r;
    }
    throw Error("no grid row '" + model_or_label + "'");
  }
};

inline void save_trained(const fs::path& dir, const TrainResult<float>& r) {
  save_checkpoint(dir, r.model, {r.best_epoch, r.best_val_loss, r.best_val_metric, "../../vocab.json"});
  write_file_atomic(dir / "training_log.csv", training_log_csv(r.log));
}

inline std::vector<int> labels_of(const std::vector<DcpSample>& samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.label);
  return y;
}

inline std::vector<double> model_scores(const Model<float>& m, const std::vector<Example>& data) {
  return predict_all(m, std::span<const Example>(data));
}

/// Trains and evaluates majority, pair and DCP evaluators on one corpus.
inline DcpGridResult run_dcp_grid(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  BuiltData d = build_data(cfg);
  EncoderConfig enc = read_encoder_config(cfg, HeadKind::classification, seed);
  const TrainConfig tc = read_train_config(cfg, false, seed);
  const std::string rule_s = cfg.get_string("eval.threshold_rule", "quantile");
  const double dcp_cutoff = cfg.get_double("eval.dcp_cutoff", 0.5);
  cfg.check_all_used();
  ThresholdRule rule;
  if (rule_s == "quantile") {
    rule = ThresholdRule::quantile;
  } else if (rule_s == "cutoff") {
    rule = ThresholdRule::cutoff;
  } else {
    throw ConfigError("eval.threshold_rule must be 'quantile' or 'cutoff'");
  }
  const Provenance prov{"dcp-grid", cfg.hash(), seed};
  save_built(d, out, enc.max_len, prov);
  enc.vocab_size = d.vocab.size();
  spdlog::info("dcp-grid: {} train / {} validation / {} test samples, vocab {}", d.train.size(), d.validation.size(),
               d.test.size(), d.vocab.size());

  DcpGridResult res;
  const auto y_val = labels_of(d.validation);
  const auto y_test = labels_of(d.test);

  const MajorityModel maj = fit_majority(d.train);
  write_file_atomic(out / "majority.json", maj.to_json().dump(1) + "\n");
  for (auto scope : {MajorityScope::global, MajorityScope::per_user}) {
    std::vector<int> pred;
    for (const auto& s : d.test) pred.push_back(predict_majority(maj, s, scope));
    res.rows.push_back({scope == MajorityScope::global ? "Global majority" : "Private majority", "",
                        accuracy_macro_f1(pred, y_test)});
  }

  const auto train_pairs = build_random_negatives(d.convs.train, derive_seed(seed, 11));
  const auto val_pairs = build_random_negatives(d.convs.validation, derive_seed(seed, 12));
  for (auto kind : {PairModelKind::nsp, PairModelKind::ruber}) {
    const std::string name = kind == PairModelKind::nsp ? "nsp" : "ruber";
    const auto trained = kind == PairModelKind::nsp ? train_nsp(train_pairs, val_pairs, d.vocab, enc, tc)
                                                    : train_ruber(train_pairs, val_pairs, d.vocab, enc, tc);
    save_trained(out / "models" / name, trained);
    const double thr = threshold_from_validation(pair_scores(trained.model, d.validation, d.vocab), y_val, rule);
    auto rep = accuracy_macro_f1(apply_threshold(pair_scores(trained.model, d.test, d.vocab), thr), y_test);
    rep.threshold_used = thr;
    res.rows.push_back({kind == PairModelKind::nsp ? "NSP" : "RUBER", name, rep});
  }

  const auto users = index_users(d.users);
  for (auto mode : kAllModes) {
    const auto tr = dcp_examples(d.train, mode, users, d.vocab, enc.max_len);
    const auto va = dcp_examples(d.validation, mode, users, d.vocab, enc.max_len);
    const auto te = dcp_examples(d.test, mode, users, d.vocab, enc.max_len);
    const auto trained = train(Model<float>(enc), tr, va, tc, dcp_model_name(mode));
    save_trained(out / "models" / dcp_model_name(mode), trained);
    auto rep = accuracy_macro_f1(apply_threshold(model_scores(trained.model, te), dcp_cutoff), y_test);
    rep.threshold_used = dcp_cutoff;
    res.rows.push_back({dcp_row_label(mode), dcp_model_name(mode), rep});
  }

  Table t;
  t.title = "Dialogue continuity prediction";
  t.header = {"Model", "Accuracy", "Macro-F1", "Threshold", "Test samples"};
  for (const auto& r : res.rows) {
    t.add_row({r.name, fmt_num(r.report.accuracy), fmt_num(r.report.macro_f1),
               std::isnan(r.report.threshold_used) ? "" : fmt_num(r.report.threshold_used, 4),
               std::to_string(r.report.n_samples)});
  }
  write_report(out, "dcp_grid", t, prov);
  return res;
}

// ---------------------------------------------------------------------------
// hazumi-grid

inline DcpSample exchange_sample(const ScoredExchange& e) {
  DcpSample s;
  s.context = e.context;
  s.context.push_back(e.system_utterance);
  s.target_speaker = e.participant_id;
  s.source_conv_id = e.dialogue_id;
  s.prefix_len = s.context.size();
  return s;
}

struct HazumiGridResult {
  // r[score source][aware]; source 0 = interlocutor, 1 = outsider mean
  std::array<std::array<std::optional<double>, 2>, 2> r{};
  std::size_t n_train = 0, n_validation = 0, n_test = 0;
};

/// Regression 2×2 grid: training score source × target-speaker awareness,
/// evaluated by Pearson r against held-out interlocutor scores.
inline HazumiGridResult run_hazumi_grid(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  const fs::path scored_path = cfg.require_string("hazumi.scored");
  const std::size_t min_freq = get_size(cfg, "data.min_freq", 1);
  const TokenizerKind tok = tokenizer_from_string(cfg.get_string("data.tokenizer", "whitespace"));
  EncoderConfig enc = read_encoder_config(cfg, HeadKind::regression, seed);
  const TrainConfig tc = read_train_config(cfg, true, seed);
  cfg.check_all_used();
  const Provenance prov{"hazumi-grid", cfg.hash(), seed};

  const auto exchanges = load_scored_exchanges(scored_path);
  const auto split = split_chronological_chunks(exchanges);
  if (split.train.empty() || split.validation.empty() || split.test.size() < 3) {
    throw ConfigError("hazumi-grid: scored corpus too small for an 8:1:1 split");
  }
  std::vector<std::string> texts, ids;
  for (const auto& e : split.train) {
    for (const auto& u : e.context) texts.push_back(u.text);
    texts.push_back(e.system_utterance.text);
    ids.push_back(e.participant_id);
  }
  const Vocabulary vocab = build_vocab(texts, ids, min_freq, tok);
  vocab.save(out / "vocab.json");
  enc.vocab_size = vocab.size();

  auto examples = [&](const std::vector<ScoredExchange>& xs, bool aware, bool outsider) {
    std::vector<Example> v;
    v.reserve(xs.size());
    for (const auto& e : xs) {
      Example ex;
      ex.ids = serialize(exchange_sample(e), aware ? PersonalizationMode::user_token : PersonalizationMode::none,
                         nullptr, vocab, enc.max_len)
                   .ids;
      ex.target = static_cast<float>(outsider ? e.outsider_mean() : e.interlocutor_score);
      v.push_back(std::move(ex));
    }
    return v;
  };
  std::vector<double> y_test;
  for (const auto& e : split.test) y_test.push_back(e.interlocutor_score);

  HazumiGridResult res;
  res.n_train = split.train.size();
  res.n_validation = split.validation.size();
  res.n_test = split.test.size();
  Table t;
  t.title = "Interlocutor score regression";
  t.header = {"Training score", "Target awareness", "Pearson's r"};
  for (int source = 0; source < 2; ++source) {
    for (int aware = 1; aware >= 0; --aware) {
      const std::string name = std::string(source == 0 ? "interlocutor" : "outsider") + (aware ? "_aware" : "_unaware");
      const auto tr = examples(split.train, aware == 1, source == 1);
      const auto va = examples(split.validation, aware == 1, source == 1);
      const auto te = examples(split.test, aware == 1, source == 1);
      Model<float> model(enc);
      model.fit_output_normalization(tr);
      const auto trained = train(std::move(model), tr, va, tc, name);
      save_checkpoint(out / "models" / name, trained.model,
                      {trained.best_epoch, trained.best_val_loss, trained.best_val_metric, "../../vocab.json"});
      write_file_atomic(out / "models" / name / "training_log.csv", training_log_csv(trained.log));
      res.r[static_cast<std::size_t>(source)][static_cast<std::size_t>(aware)] =
          pearson(model_scores(trained.model, te), y_test);
      t.add_row({source == 0 ? "Interlocutor" : "Outsider", aware ? "yes" : "no",
                 fmt_opt(res.r[static_cast<std::size_t>(source)][static_cast<std::size_t>(aware)])});
    }
  }
  write_report(out, "hazumi_grid", t, prov);
  return res;
}

// ---------------------------------------------------------------------------
// Loading a finished dcp-grid directory

inline std::map<std::string, std::size_t> load_train_counts(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  std::map<std::string, std::size_t> counts;
  for (const auto& [u, n] : j.items()) counts[u] = n.get<std::size_t>();
  return counts;
}

struct GridArtifacts {
  Vocabulary vocab;
  std::vector<UserRecord> users;
  std::vector<DcpSample> test;
  std::map<std::string, std::size_t> train_counts;
};

inline GridArtifacts load_grid(const fs::path& dir) {
  if (!fs::exists(dir / "vocab.json")) throw ConfigError("'" + dir.string() + "' is not a dcp-grid output directory");
  GridArtifacts g;
  g.vocab = Vocabulary::load(dir / "vocab.json");
  g.users = load_users(dir / "users.jsonl");
  g.test = build_dcp_samples(load_conversations(dir / "splits" / "test.jsonl").conversations);
  g.train_counts = load_train_counts(dir / "train_counts.json");
  return g;
}

// ---------------------------------------------------------------------------
// correlate

struct CorrelationRow {
  std::string name;
  CorrelationReport human;
  CorrelationReport system;
};

struct CorrelationResult {
  std::vector<CorrelationRow> rows;
  std::size_t n_samples = 0;
  std::size_t n_changed = 0;  // corrupted responses that differ from the original

  const CorrelationRow& row(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.name == name) return r;
    }
    throw Error("no correlation row '" + name + "'");
  }
};

/// Pearson r of each evaluator against oracle propensities, on the untouched
/// test responses ("human") and on corrupted copies ("system").
inline CorrelationResult run_correlation(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  const fs::path grid_dir = cfg.require_string("correlate.grid_dir");
  const fs::path arch_path = cfg.require_string("correlate.archetypes");
  const OracleWeights w = read_oracle_weights(cfg);
  const CorruptionMode cmode = corruption_from_string(cfg.get_string("corrupt.mode", "shuffle"));
  const double crate = cfg.get_double("corrupt.rate", 1.0);
  const std::size_t max_samples = get_size(cfg, "correlate.max_samples", 0);
  cfg.check_all_used();
  const Provenance prov{"correlate", cfg.hash(), seed};

  GridArtifacts g = load_grid(grid_dir);
  const auto archetypes = load_archetypes(arch_path);
  std::unordered_map<std::string, const UserArchetype*> arch;
  for (const auto& a : archetypes) arch[a.speaker_id] = &a;

  std::vector<DcpSample> human;
  for (const auto& s : g.test) {
    if (!arch.contains(s.target_speaker)) throw ConfigError("correlate: no archetype for '" + s.target_speaker + "'");
    human.push_back(s);
    if (max_samples > 0 && human.size() >= max_samples) break;
  }
  CorrelationResult res;
  res.n_samples = human.size();
  std::vector<DcpSample> system = human;
  for (std::size_t i = 0; i < system.size(); ++i) {
    Rng rng(derive_seed(derive_seed(seed, 0x636f7272), i));
    auto& last = system[i].context.back();
    last.text = corrupt_response(last.text, cmode, crate, rng);
    if (normalize_text(last.text) != normalize_text(human[i].context.back().text)) ++res.n_changed;
  }
  spdlog::info("correlate: {} of {} system responses differ from the original", res.n_changed, res.n_samples);
  auto oracle = [&](const std::vector<DcpSample>& xs) {
    std::vector<double> p;
    for (const auto& s : xs) {
      const std::vector<Utterance> ctx(s.context.begin(), s.context.end() - 1);
      p.push_back(oracle_propensity(ctx, s.context.back().text, *arch.at(s.target_speaker), w));
    }
    return p;
  };
  const auto p_human = oracle(human);
  const auto p_system = oracle(system);
  res.rows.push_back({"Oracle", correlate_with_scores(p_human, p_human, "human"),
                      correlate_with_scores(p_system, p_system, "system")});

  const auto users = index_users(g.users);
  for (const std::string name : {"nsp", "ruber"}) {
    const auto ck = load_checkpoint(grid_dir / "models" / name, g.vocab.size());
    res.rows.push_back({name == "nsp" ? "NSP" : "RUBER",
                        correlate_with_scores(pair_scores(ck.model, human, g.vocab), p_human, "human"),
                        correlate_with_scores(pair_scores(ck.model, system, g.vocab), p_system, "system")});
  }
  for (auto mode : kAllModes) {
    const auto ck = load_checkpoint(grid_dir / "models" / dcp_model_name(mode), g.vocab.size());
    const auto len = ck.model.config().max_len;
    res.rows.push_back(
        {dcp_row_label(mode),
         correlate_with_scores(model_scores(ck.model, dcp_examples(human, mode, users, g.vocab, len)), p_human, "human"),
         correlate_with_scores(model_scores(ck.model, dcp_examples(system, mode, users, g.vocab, len)), p_system,
                               "system")});
  }

  Table t;
  t.title = "Correlation with oracle reply propensity";
  t.header = {"Evaluator", "Human", "System", "Pairs"};
  for (const auto& r : res.rows) {
    t.add_row({r.name, fmt_opt(r.human.pearson_r), fmt_opt(r.system.pearson_r), std::to_string(r.human.n_pairs)});
  }
  write_report(out, "correlation", t, prov);
  return res;
}

// ---------------------------------------------------------------------------
// groups

struct GroupStats {
  std::vector<std::string> users;
  std::uint64_t training_mass = 0;
  std::size_t test_samples = 0;
  std::map<std::string, EvalReport> by_model;  // keyed by model directory name
};

struct GroupResult {
  std::vector<GroupStats> groups;
};

/// Per-group accuracy of the DCP models, groups cut by training-sample mass.
inline GroupResult run_groups(const FlatConfig& cfg, const fs::path& out) {
  const auto seed = read_seed(cfg);
  const fs::path grid_dir = cfg.require_string("groups.grid_dir");
  const std::size_t k = get_size(cfg, "groups.k", 3);
  const double cutoff = cfg.get_double("eval.dcp_cutoff", 0.5);
  cfg.check_all_used();
  const Provenance prov{"groups", cfg.hash(), seed};

  const auto vocab = Vocabulary::load(grid_dir / "vocab.json");
  const auto counts = load_train_counts(grid_dir / "train_counts.json");
  // Test records are identical across modes apart from ids; take users and labels from one.
  const auto base = read_dataset_cache(grid_dir / "data" / "none" / "test.dcpd");
  std::vector<std::string> test_users;
  for (const auto& r : base) test_users.push_back(r.target_speaker);
  const auto groups = group_by_training_mass(counts, test_users, k);
  std::unordered_map<std::string, std::size_t> group_of;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    for (const auto& u : groups[gi].users) group_of[u] = gi;
  }

  GroupResult res;
  for (const auto& g : groups) res.groups.push_back({g.users, g.training_mass, 0, {}});
  for (const auto& r : base) ++res.groups[group_of.at(r.target_speaker)].test_samples;

  for (auto mode : kAllModes) {
    const auto name = dcp_model_name(mode);
    const auto ck = load_checkpoint(grid_dir / "models" / name, vocab.size());
    const auto recs = read_dataset_cache(grid_dir / "data" / std::string(to_string(mode)) / "test.dcpd");
    std::vector<std::vector<int>> pred(groups.size()), gold(groups.size());
    for (const auto& r : recs) {
      Example e;
      e.ids = r.ids;
      const auto gi = group_of.at(r.target_speaker);
      pred[gi].push_back(ck.model.predict(e) >= cutoff ? 1 : 0);
      gold[gi].push_back(r.label);
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (!gold[gi].empty()) res.groups[gi].by_model[name] = accuracy_macro_f1(pred[gi], gold[gi]);
    }
  }

  Table t;
  t.title = "Accuracy by user group";
  t.header = {"Group", "Users", "Training samples", "Test samples"};
  for (auto mode : kAllModes) t.header.push_back(dcp_row_label(mode));
  Table plot;
  plot.title = "Accuracy by user group (long format)";
  plot.header = {"group", "model", "accuracy", "macro_f1", "training_samples", "test_samples"};
  for (std::size_t gi = 0; gi < res.groups.size(); ++gi) {
    const auto& g = res.groups[gi];
    std::vector<std::string> row = {std::to_string(gi + 1), std::to_string(g.users.size()),
                                    std::to_string(g.training_mass), std::to_string(g.test_samples)};
    for (auto mode : kAllModes) {
      auto it = g.by_model.find(dcp_model_name(mode));
      row.push_back(it == g.by_model.end() ? "n/a" : fmt_num(it->second.accuracy));
      if (it != g.by_model.end()) {
        plot.add_row({std::to_string(gi + 1), dcp_model_name(mode), fmt_num(it->second.accuracy, 4),
                      fmt_num(it->second.macro_f1, 4), std::to_string(g.training_mass), std::to_string(g.test_samples)});
      }
    }
    t.add_row(std::move(row));
  }
  write_report(out, "groups", t, prov);
  write_file_atomic(out / "groups_plot.csv", plot.to_csv(prov));
  return res;
}

}  // namespace dcpeval
