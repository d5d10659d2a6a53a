// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "dcpeval/experiments.hpp"
#include "test_util.hpp"

namespace dcpeval {
namespace {

using testing::TempDir;

TEST(FlatConfig, ParsesCommentsAndWhitespace) {
  const auto c = FlatConfig::parse("# top\n\nseed = 4\n  model.d_model=16  \nname = a = b\nflag = true\n");
  EXPECT_EQ(c.get_int("seed", 0), 4);
  EXPECT_EQ(c.get_int("model.d_model", 0), 16);
  EXPECT_EQ(c.get_string("name", ""), "a = b");
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_double("absent", 2.5), 2.5);
}

TEST(FlatConfig, Errors) {
  EXPECT_THROW(FlatConfig::parse("seed 4"), ConfigError);
  EXPECT_THROW(FlatConfig::parse(" = 4"), ConfigError);
  try {
    FlatConfig::parse("a = 1\nb = 2\na = 3\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:3"), std::string::npos) << e.what();
  }
  const auto c = FlatConfig::parse("n = 1.5\nb = maybe\n");
  EXPECT_THROW(c.get_int("n", 0), ConfigError);
  EXPECT_THROW(c.get_bool("b", false), ConfigError);
  EXPECT_THROW(c.require_string("missing"), ConfigError);
  EXPECT_THROW(FlatConfig::load("/nonexistent/x.cfg"), ConfigError);
}

TEST(FlatConfig, UnknownKeysAndHash) {
  const auto c = FlatConfig::parse("seed = 1\ntypo.key = 2\n");
  c.get_int("seed", 0);
  EXPECT_THROW(c.check_all_used(), ConfigError);
  c.get_int("typo.key", 0);
  EXPECT_NO_THROW(c.check_all_used());

  // Order and spacing do not matter, values do.
  EXPECT_EQ(FlatConfig::parse("a=1\nb=2").hash(), FlatConfig::parse("b = 2\n# c\na = 1\n").hash());
  EXPECT_NE(FlatConfig::parse("a=1").hash(), FlatConfig::parse("a=2").hash());
}

TEST(Report, CsvQuotingAndMarkdown) {
  Table t;
  t.title = "T";
  t.header = {"name", "value"};
  t.add_row({"plain", "1"});
  t.add_row({"a,b \"q\"", "2"});
  EXPECT_THROW(t.add_row({"short"}), Error);
  const Provenance p{"cmd", "abcd", 7};
  EXPECT_EQ(t.to_csv(p), "# command=cmd config_hash=abcd seed=7\nname,value\nplain,1\n\"a,b \"\"q\"\"\",2\n");
  const auto md = t.to_markdown(p);
  EXPECT_NE(md.find("## T"), std::string::npos);
  EXPECT_NE(md.find("| plain | 1 |"), std::string::npos) << md;
  EXPECT_EQ(fmt_num(0.12345), "0.123");
}

FlatConfig tiny_model(std::string extra) {
  return FlatConfig::parse(
      "seed = 2\nmodel.d_model = 8\nmodel.n_layers = 1\nmodel.n_heads = 2\nmodel.d_ff = 16\n"
      "model.max_len = 24\ntrain.epochs = 1\ntrain.batch_size = 32\n" +
      extra);
}

TEST(Pipeline, SmokeRunWritesEverything) {
  TempDir dir("pipe");
  const auto synth = run_synth(FlatConfig::parse("seed = 2\nsynth.n_users = 6\nsynth.n_convs = 200\n"
                                                 "scored.n_users = 4\nscored.n_dialogues = 4\n"
                                                 "scored.exchanges_per_dialogue = 10\n"),
                               dir / "synth");
  EXPECT_EQ(synth.stats.conversations, 200u);
  EXPECT_EQ(synth.n_scored_exchanges, 40u);
  for (const char* f : {"conversations.jsonl", "users.jsonl", "archetypes.jsonl", "oracle.jsonl", "scored.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir / "synth" / f)) << f;
  }

  const std::string corpus = "corpus.conversations = " + (dir / "synth" / "conversations.jsonl").string() +
                             "\ncorpus.users = " + (dir / "synth" / "users.jsonl").string() + "\n";
  const auto grid = run_dcp_grid(tiny_model(corpus), dir / "grid");
  EXPECT_EQ(grid.rows.size(), 8u);
  for (const auto& r : grid.rows) {
    EXPECT_GE(r.report.accuracy, 0.0);
    EXPECT_LE(r.report.accuracy, 1.0);
  }
  for (const char* m : {"nsp", "ruber", "dcp_none", "dcp_user_token", "dcp_profile", "dcp_both"}) {
    EXPECT_TRUE(fs::exists(dir / "grid" / "models" / m / "weights.bin")) << m;
  }
  EXPECT_TRUE(fs::exists(dir / "grid" / "dcp_grid.md"));
  EXPECT_TRUE(fs::exists(dir / "grid" / "dcp_grid.csv"));

  const auto hz = run_hazumi_grid(
      tiny_model("hazumi.scored = " + (dir / "synth" / "scored.jsonl").string() + "\n"), dir / "hz");
  EXPECT_EQ(hz.n_train + hz.n_validation + hz.n_test, 40u);

  const auto corr = run_correlation(
      FlatConfig::parse("seed = 2\ncorrelate.grid_dir = " + (dir / "grid").string() +
                        "\ncorrelate.archetypes = " + (dir / "synth" / "archetypes.jsonl").string() + "\n"),
      dir / "corr");
  ASSERT_FALSE(corr.rows.empty());
  EXPECT_EQ(corr.rows.front().name, "Oracle");
  EXPECT_NEAR(*corr.rows.front().human.pearson_r, 1.0, 1e-12);

  const auto groups = run_groups(FlatConfig::parse("seed = 2\ngroups.grid_dir = " + (dir / "grid").string() + "\n"),
                                 dir / "groups");
  ASSERT_EQ(groups.groups.size(), 3u);
  std::size_t test_samples = 0;
  for (const auto& g : groups.groups) test_samples += g.test_samples;
  EXPECT_EQ(test_samples, grid.row("dcp_none").report.n_samples);
}

TEST(Pipeline, ConfigErrorsSurfaceEarly) {
  TempDir dir("pipe_err");
  EXPECT_THROW(run_synth(FlatConfig::parse("synth.n_users = 4\n"), dir / "s"), ConfigError);
  EXPECT_THROW(run_synth(FlatConfig::parse("seed = 1\nsynth.n_user = 4\n"), dir / "s"), ConfigError);
  EXPECT_THROW(run_groups(FlatConfig::parse("seed = 1\ngroups.grid_dir = " + dir.path().string() + "\n"), dir / "g"),
               Error);
  EXPECT_THROW(run_correlation(FlatConfig::parse("seed = 1\ncorrelate.grid_dir = " + dir.path().string() +
                                                 "\ncorrelate.archetypes = x\n"),
                               dir / "c"),
               ConfigError);
}

}  // namespace
}  // namespace dcpeval
