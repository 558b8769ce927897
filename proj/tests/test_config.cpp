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

#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "mcqa/checkpoint.hpp"
#include "mcqa/config.hpp"
#include "mcqa/error.hpp"
#include "support.hpp"

using namespace mcqa;

TEST_SUITE("config") {
  TEST_CASE("defaults follow the reference hyperparameters") {
    RunConfig c;
    CHECK(c.model.recurrent_hidden == 128);
    CHECK(c.model.dropout_rate == 0.2);
    CHECK(c.train.learning_rate == 0.002);
    CHECK(c.chunk_budget == 40);
    CHECK(c.resolved_eval_context() == ContextRegime::top(5));
  }

  TEST_CASE("text round-trip covers every key") {
    RunConfig c;
    c.set("head", "gn");
    c.set("train_context", "uniform_5");
    c.set("eval_context", "full");
    c.set("learning_rate", "0.0125");
    c.set("precision", "f64");
    c.set("grid_rows", "gn:top_5, vanilla:none");
    c.set("grid_eval_contexts", "top_1,full");
    c.set("seed", "17");
    c.set("data_dir", "/tmp/data dir");
    const auto back = parse_run_config(c.to_text());
    CHECK(back.to_text() == c.to_text());
    for (const auto& key : RunConfig::keys()) CHECK(back.get(key) == c.get(key));
    CHECK(back.train.head == HeadKind::gn);
    CHECK(back.model.seed == 17);
    CHECK(back.train.seed == 17);
    CHECK(back.grid_rows.size() == 2);
    CHECK(back.data_dir == "/tmp/data dir");
  }

  TEST_CASE("comments, blanks and later keys") {
    const auto c = parse_run_config("# a run\n\nhead = gn   # inline\nmax_epochs=4\nmax_epochs = 6\n");
    CHECK(c.train.head == HeadKind::gn);
    CHECK(c.train.max_epochs == 6);
    RunConfig base;
    base.set("patience", "9");
    apply_run_config(base, "head = vanilla\n");
    CHECK(base.train.patience == 9);
    CHECK(base.train.head == HeadKind::vanilla);
  }

  TEST_CASE("errors name the line and key") {
    try {
      parse_run_config("head = gn\nthis is not a pair\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    try {
      parse_run_config("\nlearning_rate = fast\n");
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 2") != std::string::npos);
      CHECK(msg.find("learning_rate") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_run_config("colour = blue\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("head = wgn\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("precision = f16\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("grid_rows = gn\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("dropout = 1.5\n").validate(), ConfigError);
    CHECK_THROWS_AS(parse_run_config("max_epochs = 0\n").validate(), ConfigError);
  }

  TEST_CASE("missing inputs are reported before any work") {
    test::TempDir dir("cfg_inputs");
    RunConfig c;
    c.data_dir = dir.path();
    CHECK_THROWS_AS(require_inputs(c), IoError);
    for (const char* s : {"train", "valid", "test"}) test::write_file(dir / (std::string(s) + ".jsonl"), "");
    c.embeddings = dir / "missing.txt";
    try {
      require_inputs(c);
      FAIL("expected an io error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("missing.txt") != std::string::npos);
    }
    CHECK_NOTHROW(require_inputs(c, false));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("write then read is bit-exact in both precisions") {
    test::TempDir dir("ckpt");
    Rng rng(1);
    ParameterStore<float> f;
    f.add("a.W", test::random_matrix(3, 4, rng).cast<float>());
    f.add("b", test::random_matrix(1, 7, rng).cast<float>());
    f.at("b").value(0, 3) = -0.0f;
    save_checkpoint(dir / "f.ckpt", f, "head = gn\n");
    std::string text;
    const auto back = load_checkpoint<float>(dir / "f.ckpt", &text);
    CHECK(text == "head = gn\n");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].name == f[i].name);
      CHECK(std::memcmp(back[i].value.data(), f[i].value.data(), sizeof(float) * f[i].value.size()) == 0);
    }
    CHECK(read_checkpoint_header(dir / "f.ckpt").precision == Precision::f32);

    ParameterStore<double> d;
    d.add("x", test::random_matrix(2, 2, rng));
    save_checkpoint(dir / "d.ckpt", d, "");
    CHECK(load_checkpoint<double>(dir / "d.ckpt")[0].value == d[0].value);
    CHECK(read_checkpoint_header(dir / "d.ckpt").version == kCheckpointVersion);
  }

  TEST_CASE("saving twice gives identical bytes") {
    test::TempDir dir("ckpt_bytes");
    ParameterStore<float> f;
    f.add("w", Matrix<float>::Constant(2, 2, 0.25f));
    save_checkpoint(dir / "a.ckpt", f, "t");
    save_checkpoint(dir / "b.ckpt", f, "t");
    CHECK(test::read_file(dir / "a.ckpt") == test::read_file(dir / "b.ckpt"));
  }

  TEST_CASE("malformed files are rejected") {
    test::TempDir dir("ckpt_bad");
    test::write_file(dir / "junk.ckpt", "not a checkpoint at all");
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "junk.ckpt"), ParseError);
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "absent.ckpt"), IoError);

    ParameterStore<float> f;
    f.add("w", Matrix<float>::Constant(2, 2, 1.0f));
    save_checkpoint(dir / "ok.ckpt", f, "");
    std::string bytes = test::read_file(dir / "ok.ckpt");
    test::write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "short.ckpt"), ParseError);
    test::write_file(dir / "long.ckpt", bytes + "x");
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "long.ckpt"), ParseError);
    bytes[8] = 99;
    test::write_file(dir / "version.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "version.ckpt"), IncompatibleError);
  }
}
