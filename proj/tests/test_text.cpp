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

#include <string>
#include <vector>

#include "doctest.h"
#include "mcqa/error.hpp"
#include "mcqa/text.hpp"
#include "support.hpp"

using namespace mcqa;
using Tokens = std::vector<std::string>;

TEST_SUITE("text") {
  TEST_CASE("tokenize lowercases and detaches punctuation") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("The cat sat.") == Tokens{"the", "cat", "sat", "."});
    CHECK(tokenize("don't stop") == Tokens{"don", "'", "t", "stop"});
    CHECK(tokenize("  A\t\nB  ") == Tokens{"a", "b"});
    CHECK(tokenize("x--y") == Tokens{"x", "-", "-", "y"});
  }

  TEST_CASE("tokenize is idempotent on its joined output") {
    Rng rng(7);
    const std::string alphabet = "abcXYZ .,;'!?-()\t";
    for (int trial = 0; trial < 200; ++trial) {
      std::string text;
      const auto len = rng.below(40);
      for (std::uint64_t i = 0; i < len; ++i) text += alphabet[rng.below(alphabet.size())];
      const auto once = tokenize(text);
      std::string joined;
      for (const auto& t : once) joined += t + " ";
      CHECK(tokenize(joined) == once);
    }
  }

  TEST_CASE("split_sentences") {
    CHECK(split_sentences("A. B? C!") == Tokens{"A.", "B?", "C!"});
    CHECK(split_sentences("no terminator") == Tokens{"no terminator"});
    CHECK(split_sentences("Mr. Smith ran.") == Tokens{"Mr.", "Smith ran."});
    CHECK(split_sentences("3.14 is pi.") == Tokens{"3.14 is pi."});
    CHECK(split_sentences("").empty());
  }

  TEST_CASE("load_embeddings reads the text format") {
    test::TempDir dir("emb");
    test::write_file(dir / "e.txt", "cat 0.1 0.2\ndog -1 2.5\n");
    const auto table = load_embeddings(dir / "e.txt", 2);
    REQUIRE(table.size() == 2);
    CHECK(table.find("cat")[0] == 0.1f);
    CHECK(table.find("cat")[1] == 0.2f);
    CHECK(table.find("dog")[1] == 2.5f);
    CHECK(table.find("bird") == nullptr);

    test::write_file(dir / "empty.txt", "");
    CHECK(load_embeddings(dir / "empty.txt", 300).size() == 0);
  }

  TEST_CASE("load_embeddings rejects a short row with its line number") {
    test::TempDir dir("emb_bad");
    std::string text = "ok";
    for (int i = 0; i < 300; ++i) text += " 0.5";
    text += "\nshort";
    for (int i = 0; i < 299; ++i) text += " 0.5";
    text += "\n";
    test::write_file(dir / "e.txt", text);
    try {
      load_embeddings(dir / "e.txt", 300);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(load_embeddings(dir / "missing.txt", 4), IoError);
  }

  TEST_CASE("duplicate embedding rows keep the first and warn") {
    test::TempDir dir("emb_dup");
    test::write_file(dir / "e.txt", "cat 1 2\ncat 3 4\n");
    const auto table = load_embeddings(dir / "e.txt", 2);
    CHECK(table.size() == 1);
    CHECK(table.find("cat")[0] == 1.0f);
    CHECK(table.warnings().size() == 1);
  }

  TEST_CASE("save then load round-trips bit-exactly") {
    test::TempDir dir("emb_rt");
    const std::vector<std::string> vocab{"a", "b", "c"};
    const auto table = random_embeddings(vocab, 5, 3);
    save_embeddings(table, dir / "e.txt");
    const auto back = load_embeddings(dir / "e.txt", 5);
    REQUIRE(back.size() == 3);
    for (const auto& t : vocab)
      for (int k = 0; k < 5; ++k) CHECK(back.find(t)[k] == table.find(t)[k]);
  }

  TEST_CASE("embed maps rows independently and zeroes unknown tokens") {
    EmbeddingTable table(3);
    const float cat[] = {1.0f, 2.0f, 3.0f};
    table.insert("cat", cat);
    CHECK(embed<double>(std::vector<Token>{}, table).rows() == 0);
    CHECK(embed<double>(std::vector<Token>{}, table).cols() == 3);
    const auto m = embed<double>(std::vector<Token>{"cat", "zzz", "cat"}, table);
    CHECK(m(0, 1) == 2.0);
    CHECK(m.row(1).isZero());
    CHECK(m.row(0) == m.row(2));
  }
}
