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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "support.hpp"

namespace fs = std::filesystem;
using mcqa::test::read_file;
using mcqa::test::TempDir;
using mcqa::test::write_file;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(const TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + MCQA_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), read_file(out), read_file(err)};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write_config(const TempDir& dir, const std::string& name, const std::string& ckpt, const std::string& extra = "") {
  write_file(dir / name, "data_dir = " + (dir / "data").string() + "\nembeddings = " +
                             (dir / "data" / "embeddings.txt").string() + "\ncheckpoint_dir = " +
                             (dir / ckpt).string() +
                             "\nembed_dim = 8\nrecurrent_hidden = 4\nlinear_hidden = 6\ngru_layers = 1\n"
                             "max_epochs = 2\nhead = wgn_mlp\n" +
                             extra);
}

void gen(const TempDir& dir) {
  const Run r = run_cli(dir, "gen-synth --out " + q(dir / "data") +
                              " --docs 10 --questions 2 --sentences 12 --vocab 300 --embed-dim 8 --seed 3");
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    TempDir dir("cli_usage");
    CHECK(run_cli(dir, "").code == 2);
    CHECK(run_cli(dir, "frobnicate").code == 2);
    CHECK(run_cli(dir, "gen-synth --out " + q(dir / "x") + " --docs 0").code == 2);
    CHECK(run_cli(dir, "train").code == 2);
    CHECK(run_cli(dir, "--version").code == 0);
  }

  TEST_CASE("config and input errors exit with 2 and name the problem") {
    TempDir dir("cli_config");
    gen(dir);
    write_config(dir, "bad.cfg", "ckpt", "learning_rate = fast\n");
    Run r = run_cli(dir, "train --config " + q(dir / "bad.cfg"));
    CHECK(r.code == 2);
    CHECK(r.err.find("learning_rate") != std::string::npos);
    write_config(dir, "ok.cfg", "ckpt");
    r = run_cli(dir, "train --config " + q(dir / "ok.cfg") + " --head softmax");
    CHECK(r.code == 2);
    r = run_cli(dir, "train --config " + q(dir / "ok.cfg") + " --set embeddings=" + q(dir / "gone.txt"));
    CHECK(r.code == 2);
    CHECK(r.err.find("gone.txt") != std::string::npos);
    r = run_cli(dir, "eval --checkpoint " + q(dir / "missing.ckpt"));
    CHECK(r.code == 2);
  }

  TEST_CASE("numeric failures exit with 3") {
    TempDir dir("cli_numeric");
    gen(dir);
    write_config(dir, "nan.cfg", "ckpt", "learning_rate = 1e300\nadam_epsilon = 1e-300\n");
    const Run r = run_cli(dir, "train --config " + q(dir / "nan.cfg"));
    CHECK(r.code == 3);
  }

  TEST_CASE("train then eval is byte-for-byte reproducible") {
    TempDir dir("cli_repro");
    gen(dir);
    write_config(dir, "a.cfg", "a");
    write_config(dir, "b.cfg", "b");
    Run r = run_cli(dir, "train --config " + q(dir / "a.cfg") + " --dump-chunks " + q(dir / "chunks.jsonl"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("epoch 2") != std::string::npos);
    CHECK(read_file(dir / "chunks.jsonl").find("\"qid\"") != std::string::npos);
    REQUIRE(run_cli(dir, "train --config " + q(dir / "b.cfg")).code == 0);
    CHECK(read_file(dir / "a" / "model.ckpt") == read_file(dir / "b" / "model.ckpt"));
    CHECK(read_file(dir / "a" / "train_log.jsonl") == read_file(dir / "b" / "train_log.jsonl"));

    r = run_cli(dir, "eval --checkpoint " + q(dir / "a" / "model.ckpt") + " --split test");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("MRR ") != std::string::npos);
    REQUIRE(run_cli(dir, "eval --checkpoint " + q(dir / "b" / "model.ckpt") + " --split test").code == 0);
    const std::string report = read_file(dir / "a" / "report_test_top_5.json");
    CHECK(report.find("\"mrr\"") != std::string::npos);
    CHECK(report == read_file(dir / "b" / "report_test_top_5.json"));

    r = run_cli(dir, "eval --checkpoint " + q(dir / "a" / "model.ckpt") + " --eval-context top_1 --report " +
                      q(dir / "r1.json"));
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "r1.json"));
  }

  TEST_CASE("an incompatible checkpoint exits with 2") {
    TempDir dir("cli_incompat");
    gen(dir);
    write_config(dir, "a.cfg", "a");
    REQUIRE(run_cli(dir, "train --config " + q(dir / "a.cfg")).code == 0);
    const Run r = run_cli(dir, "eval --checkpoint " + q(dir / "a" / "model.ckpt") + " --config " + q(dir / "a.cfg") +
                                " --set linear_hidden=7");
    CHECK(r.code == 2);
    CHECK(r.err.find("checkpoint") != std::string::npos);
  }

  TEST_CASE("grid writes a csv") {
    TempDir dir("cli_grid");
    gen(dir);
    write_config(dir, "g.cfg", "g",
                 "max_epochs = 1\ngrid_rows = gn:top_5, vanilla:top_1\ngrid_eval_contexts = top_1,top_5\n"
                 "report_dir = " +
                     (dir / "rep").string() + "\n");
    fs::create_directories(dir / "rep");
    const Run r = run_cli(dir, "grid --config " + q(dir / "g.cfg"));
    REQUIRE(r.code == 0);
    const std::string csv = read_file(dir / "rep" / "grid.csv");
    CHECK(csv.find("top_1") != std::string::npos);
    CHECK(csv.find("vanilla") != std::string::npos);
  }
}
