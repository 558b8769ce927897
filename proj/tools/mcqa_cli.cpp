// Copyright 2026 The mcqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Talks to the library only through the C API.

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcqa/mcqa.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int exit_code(mcqa_status s) {
  switch (s) {
    case MCQA_OK:
      return kExitOk;
    case MCQA_ERR_NUMERIC:
    case MCQA_ERR_WEIGHT_DOMAIN:
      return kExitNumeric;
    case MCQA_ERR_INTERNAL:
      return kExitInternal;
    default:
      return kExitConfig;
  }
}

int report(mcqa_status s) {
  if (s != MCQA_OK) std::fprintf(stderr, "mcqa: %s: %s\n", mcqa_status_name(s), mcqa_last_error());
  return exit_code(s);
}

struct ConfigDeleter {
  void operator()(mcqa_config* c) const { mcqa_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<mcqa_config, ConfigDeleter>;

struct Overrides {
  std::string config_file;
  std::optional<std::string> head;
  std::optional<std::string> train_context;
  std::optional<std::string> seed;
  std::vector<std::string> sets;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--head", o.head, "vanilla|gn|wgn_static|wgn_mlp");
  cmd->add_option("--train-context", o.train_context, "top_5|uniform_5|top_1|full|none");
  cmd->add_option("--seed", o.seed, "Seed for every random choice");
  cmd->add_option("--set", o.sets, "Extra key=value config entries (repeatable)");
}

// File first, then flags: flags win.
mcqa_status build_config(const Overrides& o, ConfigPtr& out) {
  mcqa_config* raw = nullptr;
  if (auto s = mcqa_config_create(&raw); s != MCQA_OK) return s;
  out.reset(raw);
  if (!o.config_file.empty())
    if (auto s = mcqa_config_load_file(raw, o.config_file.c_str()); s != MCQA_OK) return s;
  const std::pair<const char*, const std::optional<std::string>*> flags[] = {
      {"head", &o.head}, {"train_context", &o.train_context}, {"seed", &o.seed}};
  for (const auto& [key, value] : flags)
    if (*value)
      if (auto s = mcqa_config_set(raw, key, (*value)->c_str()); s != MCQA_OK) return s;
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "mcqa: --set expects key=value, got '%s'\n", kv.c_str());
      return MCQA_ERR_CONFIG;
    }
    if (auto s = mcqa_config_set(raw, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); s != MCQA_OK) return s;
  }
  return MCQA_OK;
}

void print_epoch(void*, uint64_t epoch, double loss, double valid_mrr) {
  if (std::isnan(valid_mrr))
    std::printf("epoch %llu  train_loss %.6f\n", static_cast<unsigned long long>(epoch), loss);
  else
    std::printf("epoch %llu  train_loss %.6f  valid_mrr %.3f\n", static_cast<unsigned long long>(epoch), loss,
                valid_mrr);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Answer selection over long contexts with chunk-level normalization"};
  app.set_version_flag("--version", std::string(mcqa_version()));
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset and embedding table");
  mcqa_synth_options synth;
  mcqa_synth_options_default(&synth);
  std::string out_dir;
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--docs", synth.docs, "Number of documents")->required();
  gen->add_option("--questions", synth.questions_per_doc, "Questions per document")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  gen->add_option("--sentences", synth.sentences_per_summary, "Sentences per summary")->capture_default_str();
  gen->add_option("--sentence-tokens", synth.tokens_per_sentence, "Tokens per sentence")->capture_default_str();
  gen->add_option("--vocab", synth.vocab_size, "Vocabulary size")->capture_default_str();
  gen->add_option("--embed-dim", synth.embed_dim, "Embedding width")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a scorer and write its best checkpoint");
  Overrides train_o;
  std::string train_dump;
  train->add_option("--config", train_o.config_file, "key=value config file")->required();
  add_overrides(train, train_o);
  train->add_option("--dump-chunks", train_dump, "Write the training split's selected chunks as JSONL");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  Overrides eval_o;
  std::string checkpoint, split = "valid", report_path, eval_dump;
  std::optional<std::string> eval_context;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "train|valid|test")->capture_default_str();
  eval->add_option("--eval-context", eval_context, "top_1|top_5|full|...");
  eval->add_option("--config", eval_o.config_file, "Config file (defaults to the one stored in the checkpoint)");
  eval->add_option("--set", eval_o.sets, "Extra key=value config entries (repeatable)");
  eval->add_option("--report", report_path, "Report JSON path");
  eval->add_option("--dump-chunks", eval_dump, "Write the split's selected chunks as JSONL");

  // grid
  auto* grid = app.add_subcommand("grid", "Train every grid row and tabulate MRR per eval context");
  Overrides grid_o;
  std::string grid_out;
  grid->add_option("--config", grid_o.config_file, "key=value config file")->required();
  add_overrides(grid, grid_o);
  grid->add_option("--out", grid_out, "CSV path (default <report_dir>/grid.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (*gen) {
    if (synth.docs == 0) {
      std::fprintf(stderr, "mcqa: usage error: --docs must be >= 1\n");
      return kExitConfig;
    }
    const mcqa_status s = mcqa_generate_synthetic(out_dir.c_str(), &synth);
    if (s == MCQA_OK) std::printf("wrote %s\n", out_dir.c_str());
    return report(s);
  }

  if (*train) {
    ConfigPtr cfg;
    if (auto s = build_config(train_o, cfg); s != MCQA_OK) return report(s);
    if (!train_dump.empty()) {
      // The training regime's selection, with the question-only query.
      const char* ctx = nullptr;
      if (auto s = mcqa_config_get(cfg.get(), "train_context", &ctx); s != MCQA_OK) return report(s);
      const std::string context = ctx;
      if (auto s = mcqa_dump_chunks(cfg.get(), "train", context.c_str(), train_dump.c_str()); s != MCQA_OK)
        return report(s);
    }
    double best = 0.0;
    const mcqa_status s = mcqa_train(cfg.get(), print_epoch, nullptr, &best);
    if (s == MCQA_OK && !std::isnan(best)) std::printf("best valid MRR %.3f\n", best);
    return report(s);
  }

  if (*eval) {
    ConfigPtr cfg;
    const bool have_config = !eval_o.config_file.empty() || !eval_o.sets.empty();
    if (have_config)
      if (auto s = build_config(eval_o, cfg); s != MCQA_OK) return report(s);
    const char* ctx = eval_context ? eval_context->c_str() : nullptr;
    double mrr = 0.0;
    const mcqa_status s = mcqa_evaluate(cfg.get(), checkpoint.c_str(), split.c_str(), ctx,
                                        report_path.empty() ? nullptr : report_path.c_str(), &mrr);
    if (s != MCQA_OK) return report(s);
    if (!eval_dump.empty()) {
      if (!cfg) {
        std::fprintf(stderr, "mcqa: usage error: --dump-chunks with eval needs --config\n");
        return kExitConfig;
      }
      if (auto d = mcqa_dump_chunks(cfg.get(), split.c_str(), ctx ? ctx : "top_5", eval_dump.c_str()); d != MCQA_OK)
        return report(d);
    }
    std::printf("MRR %.3f\n", mrr);
    return kExitOk;
  }

  if (*grid) {
    ConfigPtr cfg;
    if (auto s = build_config(grid_o, cfg); s != MCQA_OK) return report(s);
    if (grid_out.empty()) {
      const char* dir_value = nullptr;
      if (auto s = mcqa_config_get(cfg.get(), "report_dir", &dir_value); s != MCQA_OK) return report(s);
      const std::string dir = dir_value;
      grid_out = (dir.empty() ? std::string(".") : dir) + "/grid.csv";
    }
    const mcqa_status s = mcqa_grid(cfg.get(), grid_out.c_str());
    if (s != MCQA_OK) return report(s);
    std::printf("wrote %s\n", grid_out.c_str());
    return kExitOk;
  }
  return kExitInternal;
}
