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

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mcqa/error.hpp"
#include "mcqa/train.hpp"
#include "support.hpp"

using namespace mcqa;

namespace {

struct TinyData {
  EmbeddingTable table{8};
  Workspace ws;
};

TinyData make_tiny(std::size_t docs, std::size_t questions, std::uint64_t seed = 0) {
  SyntheticConfig sc;
  sc.num_docs = docs;
  sc.questions_per_doc = questions;
  sc.sentences_per_summary = 40;
  sc.vocab_size = 300;
  sc.seed = seed;
  TinyData d;
  d.table = random_embeddings(synthetic_vocabulary(sc), 8, seed + 1);
  d.ws = make_workspace(d.table, split_documents(generate_synthetic(sc)));
  return d;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.embed_dim = 8;
  m.recurrent_hidden = 4;
  m.linear_hidden = 8;
  m.gru_layers = 1;
  m.ffn_layers = 2;
  m.dropout_rate = 0.0;
  return m;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("context names") {
    CHECK(parse_context("top_5") == ContextRegime::top(5));
    CHECK(parse_context("uniform_3") == ContextRegime::uniform(3));
    CHECK(parse_context("full") == ContextRegime::full());
    CHECK(parse_context("none") == ContextRegime::none());
    CHECK(to_string(ContextRegime::top(1)) == "top_1");
    for (const char* bad : {"top_0", "top_", "top_x", "uniform", "all"}) CHECK_THROWS_AS(parse_context(bad), ConfigError);
  }

  TEST_CASE("default evaluation contexts") {
    CHECK(default_eval_context(HeadKind::vanilla, ContextRegime::top(1)) == ContextRegime::top(1));
    CHECK(default_eval_context(HeadKind::vanilla, ContextRegime::full()) == ContextRegime::top(5));
    CHECK(default_eval_context(HeadKind::gn, ContextRegime::uniform(5)) == ContextRegime::top(5));
    CHECK(default_eval_context(HeadKind::vanilla, ContextRegime::none()) == ContextRegime::none());
    CHECK(effective_eval_context(ContextRegime::none(), ContextRegime::full()) == ContextRegime::none());
    CHECK(effective_eval_context(ContextRegime::top(5), ContextRegime::full()) == ContextRegime::full());
  }

  TEST_CASE("adam first step moves each coordinate by about lr") {
    ParameterStore<double> store;
    auto& p = store.add("p", Matrix<double>::Constant(2, 3, 0.5));
    p.grad = Matrix<double>::Ones(2, 3);
    Adam<double> adam(0.002, 0.9, 0.999, 1e-8);
    adam.step(store);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(0.5 - p.value.data()[i] - 0.002) <= 1e-9);
    CHECK(p.grad.isZero());
    CHECK(adam.steps() == 1);
  }

  TEST_CASE("adam with a zero first gradient leaves parameters unchanged") {
    ParameterStore<double> store;
    auto& p = store.add("p", Matrix<double>::Constant(2, 2, 0.5));
    p.grad = Matrix<double>::Zero(2, 2);
    Adam<double> adam(0.002, 0.9, 0.999, 1e-8);
    adam.step(store);
    CHECK(p.value == Matrix<double>::Constant(2, 2, 0.5));
  }

  TEST_CASE("adam follows the recurrence by hand") {
    ParameterStore<double> store;
    auto& p = store.add("p", Matrix<double>::Constant(1, 1, 1.0));
    const double lr = 0.1, b1 = 0.8, b2 = 0.9, eps = 1e-8;
    Adam<double> adam(lr, b1, b2, eps);
    double theta = 1.0, m = 0.0, v = 0.0;
    const double grads[] = {0.5, -2.0, 1.5};
    for (int t = 1; t <= 3; ++t) {
      const double g = grads[t - 1];
      p.grad(0, 0) = g;
      adam.step(store);
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      theta -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      CHECK(std::abs(p.value(0, 0) - theta) <= 1e-12);
    }
  }

  TEST_CASE("adam rejects non-finite gradients without touching parameters") {
    ParameterStore<double> store;
    auto& a = store.add("a", Matrix<double>::Ones(1, 2));
    auto& b = store.add("b", Matrix<double>::Ones(1, 2));
    a.grad = Matrix<double>::Ones(1, 2);
    b.grad = Matrix<double>::Ones(1, 2);
    b.grad(0, 1) = NAN;
    Adam<double> adam(0.01, 0.9, 0.999, 1e-8);
    try {
      adam.step(store);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
    CHECK(a.value.isOnes());
  }

  TEST_CASE("gold rank and mrr") {
    CHECK(gold_rank(std::vector<double>{0.1, 0.7, 0.2}, 1) == 1);
    CHECK(gold_rank(std::vector<double>{0.1, 0.7, 0.2}, 0) == 3);
    CHECK(gold_rank(std::vector<double>{0.4, 0.4, 0.2}, 0) == 2);
    CHECK(mean_reciprocal_rank(std::vector<std::size_t>{1, 1, 1}) == 1.0);
    CHECK(mean_reciprocal_rank(std::vector<std::size_t>{1, 2, 4}) == doctest::Approx(1.75 / 3).epsilon(1e-12));
    CHECK_THROWS_AS(mean_reciprocal_rank(std::vector<std::size_t>{}), UsageError);
  }

  TEST_CASE("random scorer over four candidates has mrr near 0.5208") {
    Rng rng(1);
    std::vector<std::size_t> ranks;
    for (int q = 0; q < 20000; ++q) {
      std::vector<double> p(4);
      for (auto& v : p) v = rng.uniform();
      ranks.push_back(gold_rank(p, rng.below(4)));
    }
    CHECK(std::abs(mean_reciprocal_rank(ranks) - (1.0 + 0.5 + 1.0 / 3 + 0.25) / 4) <= 0.03);
  }

  TEST_CASE("prepare_documents builds candidates and chunks") {
    SyntheticConfig sc;
    sc.num_docs = 2;
    sc.questions_per_doc = 3;
    sc.sentences_per_summary = 20;
    const auto docs = generate_synthetic(sc);
    const auto prepared = prepare_documents(docs);
    REQUIRE(prepared.size() == 2);
    CHECK(prepared[0].candidates.size() == 3);
    CHECK(prepared[0].questions[2].gold == 2);
    std::size_t total = 0;
    for (const auto& c : prepared[0].chunks) total += c.tokens.size();
    CHECK(total == prepared[0].tokens.size());
  }

  TEST_CASE("build_context shapes follow the head") {
    auto d = make_tiny(10, 3);
    const auto& doc = d.ws.train[0];
    const auto& q = doc.questions[0];
    REQUIRE(doc.chunks.size() > 5);

    const auto top = build_context(doc, q, d.ws.tfidf, ContextRegime::top(5), HeadKind::gn, false, 0);
    CHECK(top.contexts.size() == 5);
    CHECK(top.tfidf.size() == 5);
    CHECK(top.chunk_indices.size() == 5);
    for (std::size_t i = 1; i < top.chunk_indices.size(); ++i) CHECK(top.chunk_indices[i - 1] < top.chunk_indices[i]);

    const auto joined = build_context(doc, q, d.ws.tfidf, ContextRegime::top(5), HeadKind::vanilla, false, 0);
    REQUIRE(joined.contexts.size() == 1);
    std::size_t len = 0;
    for (const auto& c : top.contexts) len += c.size();
    CHECK(joined.contexts[0].size() == len);

    const auto full = build_context(doc, q, d.ws.tfidf, ContextRegime::full(), HeadKind::wgn_static, false, 0);
    CHECK(full.contexts.size() == doc.chunks.size());

    const auto none = build_context(doc, q, d.ws.tfidf, ContextRegime::none(), HeadKind::vanilla, false, 0);
    REQUIRE(none.contexts.size() == 1);
    CHECK(none.contexts[0].empty());
    CHECK(none.chunk_indices.empty());

    const auto u1 = build_context(doc, q, d.ws.tfidf, ContextRegime::uniform(3), HeadKind::gn, true, 42);
    const auto u2 = build_context(doc, q, d.ws.tfidf, ContextRegime::uniform(3), HeadKind::gn, true, 42);
    CHECK(u1.chunk_indices == u2.chunk_indices);
  }

  TEST_CASE("the planted chunk ranks first with the answer in the query") {
    auto d = make_tiny(10, 3);
    std::size_t hits = 0, total = 0;
    for (const auto& doc : d.ws.train)
      for (const auto& q : doc.questions) {
        const auto ctx = build_context(doc, q, d.ws.tfidf, ContextRegime::top(1), HeadKind::gn, true, 0);
        const auto& tokens = ctx.contexts[0];
        hits += std::find(tokens.begin(), tokens.end(), q.answer[0]) != tokens.end();
        ++total;
      }
    CHECK(hits == total);
  }

  TEST_CASE("a single question is fit to near certainty") {
    SyntheticConfig sc;
    sc.num_docs = 1;
    sc.questions_per_doc = 4;
    sc.sentences_per_summary = 8;
    sc.vocab_size = 200;
    DatasetSplits splits;
    splits.train = generate_synthetic(sc);
    splits.train[0].questions.resize(1);
    splits.train[0].questions[0].gold_answer_text = "c1 c2";
    splits.train[0].questions.push_back({"extra", "what ?", "c3 c4"});
    const auto table = random_embeddings(synthetic_vocabulary(sc), 8, 3);
    const auto ws = make_workspace(table, splits);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.head = HeadKind::gn;
    tc.max_epochs = 60;
    tc.patience = 60;
    tc.learning_rate = 0.01;
    const auto outcome = train<double>(ws, init_parameters<double>(model, tc), model, tc);
    REQUIRE(outcome.log.size() == 60);
    CHECK(outcome.log.back().train_loss < 0.05);
    CHECK(outcome.log.back().train_loss < outcome.log.front().train_loss);
    CHECK(std::isnan(outcome.log.back().valid_mrr));
    CHECK(outcome.best_epoch == 60);
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto d = make_tiny(5, 2);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.max_epochs = 1;
    const auto init = init_parameters<float>(model, tc);
    const auto outcome = train<float>(d.ws, init, model, tc);
    for (std::size_t i = 0; i < init.size(); ++i) CHECK(outcome.best[i].value == init[i].value);
  }

  TEST_CASE("training is deterministic and evaluation has no side effects") {
    auto d = make_tiny(10, 3);
    ModelConfig model = tiny_model();
    model.dropout_rate = 0.2;
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.train_context = ContextRegime::uniform(3);
    tc.seed = 9;
    const auto a = train<float>(d.ws, init_parameters<float>(model, tc), model, tc);
    const auto b = train<float>(d.ws, init_parameters<float>(model, tc), model, tc);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) CHECK(a.log[e].to_json() == b.log[e].to_json());
    for (std::size_t i = 0; i < a.best.size(); ++i) CHECK(a.best[i].value == b.best[i].value);

    auto params = a.best;
    const auto r1 = evaluate_mrr<float>(d.ws, d.ws.valid, params, model, tc.head, ContextRegime::top(5));
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i].value == a.best[i].value);
    const auto r2 = evaluate_mrr<float>(d.ws, d.ws.valid, params, model, tc.head, ContextRegime::top(5));
    CHECK(r1.to_json() == r2.to_json());
    CHECK(r1.mrr > 0.0);
    CHECK(r1.mrr <= 1.0);
    for (const auto& q : r1.questions) {
      CHECK(q.gold_rank >= 1);
      CHECK(q.gold_rank <= q.probabilities.size());
    }
  }

  TEST_CASE("training refuses mismatched embeddings and missing head parameters") {
    auto d = make_tiny(5, 2);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.head = HeadKind::gn;
    auto params = init_parameters<float>(model, tc);
    tc.head = HeadKind::wgn_mlp;
    CHECK_THROWS_AS(train<float>(d.ws, params, model, tc), IncompatibleError);
    model.embed_dim = 16;
    CHECK_THROWS_AS(train<float>(d.ws, init_parameters<float>(model, tc), model, tc), IncompatibleError);
  }

  TEST_CASE("gold answer missing from the candidates is an integrity error") {
    CandidateSet cs("d", {"a"}, {{"q", 0}});
    CHECK_THROWS_AS(cs.gold_index_for("other"), IntegrityError);
  }

  TEST_CASE("grid runs every cell and renders csv") {
    auto d = make_tiny(10, 3);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.max_epochs = 1;
    const std::vector<GridRow> rows{{HeadKind::gn, ContextRegime::top(5)}, {HeadKind::vanilla, ContextRegime::none()}};
    const std::vector<ContextRegime> cols{ContextRegime::top(1), ContextRegime::full()};
    const auto grid = run_grid<float>(d.ws, rows, cols, model, tc, Split::valid);
    REQUIRE(grid.mrr.size() == 2);
    CHECK(grid.mrr[1][0] == grid.mrr[1][1]);
    const std::string csv = grid.to_csv();
    CHECK(csv.rfind("model,train_context,top_1,full\ngn,top_5,", 0) == 0);
    CHECK(csv.find("\nvanilla,none,") != std::string::npos);

    const std::vector<GridRow> single{{HeadKind::gn, ContextRegime::top(5)}};
    const std::vector<ContextRegime> one{ContextRegime::top(5)};
    const auto cell = run_grid<float>(d.ws, single, one, model, tc, Split::valid);
    CHECK(cell.mrr.size() == 1);
    CHECK(cell.mrr[0].size() == 1);
  }

  TEST_CASE("default grid mirrors the comparison table") {
    const auto rows = default_grid_rows();
    CHECK(rows.size() == 7);
    CHECK(rows.front() == GridRow{HeadKind::wgn_mlp, ContextRegime::top(5)});
    CHECK(default_grid_columns() == std::vector<ContextRegime>{ContextRegime::top(1), ContextRegime::top(5),
                                                               ContextRegime::full()});
  }

  TEST_CASE("epoch log json") {
    EpochLog log{3, 0.5};
    CHECK(log.to_json() == R"({"epoch":3,"train_loss":0.5,"valid_mrr":null})");
  }
}
