// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

// dcpeval: synthetic corpora, DCP evaluators, and the report tables.

#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dcpeval/experiments.hpp"

namespace {

using Runner = std::function<void(const dcpeval::FlatConfig&, const dcpeval::fs::path&)>;

struct Command {
  const char* name;
  const char* help;
  Runner run;
};

}  // namespace

int main(int argc, char** argv) {
  using namespace dcpeval;
  CLI::App app{"Interlocutor-aware dialogue evaluators: data, training and reports"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  const Command commands[] = {
      {"synth", "generate a synthetic corpus, users, oracle propensities and scored exchanges",
       [](const FlatConfig& c, const fs::path& o) {
         const auto s = run_synth(c, o);
         std::cout << stats_table({{"all", s.stats}}).to_markdown({"synth", c.hash(), read_seed(c)});
       }},
      {"ingest", "load and filter a conversation corpus",
       [](const FlatConfig& c, const fs::path& o) {
         const auto s = run_ingest(c, o);
         std::cout << "kept " << s.filter.output_conversations << " of " << s.filter.input_conversations
                   << " conversations\n";
       }},
      {"build", "split, cap, build DCP samples, vocabulary and dataset caches",
       [](const FlatConfig& c, const fs::path& o) {
         const auto s = run_build(c, o);
         std::cout << "samples: train " << s.n_train << ", validation " << s.n_validation << ", test " << s.n_test
                   << "; vocab " << s.vocab_size << "\n";
       }},
      {"dcp-grid", "train and evaluate majority, NSP, RUBER and the four DCP evaluators",
       [](const FlatConfig& c, const fs::path& o) {
         run_dcp_grid(c, o);
         std::cout << read_file(o / "dcp_grid.md");
       }},
      {"hazumi-grid", "score-source x target-awareness regression grid",
       [](const FlatConfig& c, const fs::path& o) {
         run_hazumi_grid(c, o);
         std::cout << read_file(o / "hazumi_grid.md");
       }},
      {"correlate", "correlate evaluators with oracle propensities on human and corrupted responses",
       [](const FlatConfig& c, const fs::path& o) {
         run_correlation(c, o);
         std::cout << read_file(o / "correlation.md");
       }},
      {"groups", "per-user-group accuracy, groups balanced by training mass",
       [](const FlatConfig& c, const fs::path& o) {
         run_groups(c, o);
         std::cout << read_file(o / "groups.md");
       }},
  };

  std::string config_path;
  std::string out_dir;
  const Command* chosen = nullptr;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "flat key = value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->callback([&chosen, &cmd] { chosen = &cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const auto cfg = FlatConfig::load(config_path);
    fs::create_directories(out_dir);
    chosen->run(cfg, out_dir);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const SchemaError& e) {
    spdlog::error("input error: {}", e.what());
    return 2;
  } catch (const TrainingError& e) {
    spdlog::error("training failed: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
