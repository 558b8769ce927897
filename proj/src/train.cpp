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

#include "mcqa/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "mcqa/error.hpp"

namespace mcqa {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t parse_count(std::string_view digits, std::string_view whole) {
  std::size_t k = 0;
  const auto* end = digits.data() + digits.size();
  auto [ptr, ec] = std::from_chars(digits.data(), end, k);
  if (digits.empty() || ec != std::errc() || ptr != end || k == 0)
    throw ConfigError("bad context '" + std::string(whole) + "' (expected top_N|uniform_N|full|none)");
  return k;
}

// JSON cannot hold NaN; a missing validation MRR is written as null.
nlohmann::ordered_json number_or_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

}  // namespace

ContextRegime parse_context(std::string_view name) {
  if (name == "full") return ContextRegime::full();
  if (name == "none") return ContextRegime::none();
  if (name.starts_with("top_")) return ContextRegime::top(parse_count(name.substr(4), name));
  if (name.starts_with("uniform_")) return ContextRegime::uniform(parse_count(name.substr(8), name));
  throw ConfigError("unknown context '" + std::string(name) + "' (expected top_N|uniform_N|full|none)");
}

std::string to_string(ContextRegime regime) {
  switch (regime.kind) {
    case ContextRegime::Kind::top:
      return "top_" + std::to_string(regime.k);
    case ContextRegime::Kind::uniform:
      return "uniform_" + std::to_string(regime.k);
    case ContextRegime::Kind::full:
      return "full";
    case ContextRegime::Kind::none:
      return "none";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be a finite number >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  if ((train_context.kind == ContextRegime::Kind::top || train_context.kind == ContextRegime::Kind::uniform) &&
      train_context.k < 1)
    throw ConfigError("train_context needs k >= 1");
}

ContextRegime default_eval_context(HeadKind head, ContextRegime train_context) {
  if (train_context.kind == ContextRegime::Kind::none) return ContextRegime::none();
  if (head == HeadKind::vanilla && train_context == ContextRegime::top(1)) return ContextRegime::top(1);
  return ContextRegime::top(5);
}

ContextRegime effective_eval_context(ContextRegime train_context, ContextRegime requested) {
  if (train_context.kind == ContextRegime::Kind::none) return ContextRegime::none();
  return requested;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

template <typename T>
void Adam<T>::step(ParameterStore<T>& params) {
  for (const auto& p : params) {
    if (p.grad.size() != 0 && !p.grad.allFinite())
      throw NumericError("non-finite gradient in parameter '" + p.name + "' at step " + std::to_string(t_ + 1));
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (m_.size() != params.size()) throw UsageError("parameter store changed between optimizer steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.size() == 0) continue;
    m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const double mh = static_cast<double>(m_[i](r, c)) / c1;
        const double vh = static_cast<double>(v_[i](r, c)) / c2;
        p.value(r, c) -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
    p.grad.setZero();
  }
}

// ---------------------------------------------------------------------------
// Data preparation

std::vector<PreparedDocument> prepare_documents(std::span<const DocumentRecord> docs, std::size_t chunk_budget) {
  std::vector<PreparedDocument> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    PreparedDocument p;
    p.doc_id = doc.doc_id;
    std::vector<std::vector<Token>> sentences;
    for (const auto& s : split_sentences(doc.summary_text)) {
      sentences.push_back(tokenize(s));
      p.tokens.insert(p.tokens.end(), sentences.back().begin(), sentences.back().end());
    }
    p.chunks = chunk_document(doc.doc_id, sentences, chunk_budget);
    const CandidateSet cs = build_candidate_set(doc);
    p.candidates = cs.candidates();
    for (const auto& c : p.candidates) p.candidate_tokens.push_back(tokenize(c));
    for (const auto& q : doc.questions) {
      PreparedQuestion pq;
      pq.qid = q.qid;
      pq.question = tokenize(q.question_text);
      pq.answer = tokenize(q.gold_answer_text);
      pq.gold = cs.gold_index_for(q.qid);
      if (pq.gold >= p.candidates.size() ||
          normalize_answer(p.candidates[pq.gold]) != normalize_answer(q.gold_answer_text))
        throw IntegrityError("gold answer of question '" + q.qid + "' is not a candidate of '" + doc.doc_id + "'");
      p.questions.push_back(std::move(pq));
    }
    out.push_back(std::move(p));
  }
  return out;
}

TfidfModel fit_tfidf(std::span<const PreparedDocument> docs) {
  std::vector<Chunk> all;
  for (const auto& d : docs) all.insert(all.end(), d.chunks.begin(), d.chunks.end());
  if (all.empty()) throw UsageError("cannot fit tf-idf: the training split has no chunks");
  return TfidfModel::fit(all);
}

QuestionContext build_context(const PreparedDocument& doc, const PreparedQuestion& question,
                              const TfidfModel& tfidf, ContextRegime regime, HeadKind head, bool training,
                              std::uint64_t sample_seed) {
  QuestionContext ctx;
  if (regime.kind == ContextRegime::Kind::none || doc.chunks.empty()) {
    ctx.contexts.emplace_back();
    ctx.tfidf.push_back(0.0);
    return ctx;
  }
  std::vector<Token> query = question.question;
  if (training) query.insert(query.end(), question.answer.begin(), question.answer.end());
  const std::vector<double> scores = score_chunks(tfidf, doc.chunks, query);

  switch (regime.kind) {
    case ContextRegime::Kind::top:
      ctx.chunk_indices = select_chunk_indices(scores, regime.k, SelectionMode::top_k, sample_seed);
      break;
    case ContextRegime::Kind::uniform:
      ctx.chunk_indices = select_chunk_indices(scores, regime.k, SelectionMode::uniform_k, sample_seed);
      break;
    default:
      for (std::size_t i = 0; i < doc.chunks.size(); ++i) ctx.chunk_indices.push_back(i);
      break;
  }

  if (head == HeadKind::vanilla) {
    std::vector<Token> joined;
    for (std::size_t i : ctx.chunk_indices)
      joined.insert(joined.end(), doc.chunks[i].tokens.begin(), doc.chunks[i].tokens.end());
    ctx.tfidf.push_back(tfidf.similarity(joined, query));
    ctx.contexts.push_back(std::move(joined));
  } else {
    for (std::size_t i : ctx.chunk_indices) {
      ctx.contexts.push_back(doc.chunks[i].tokens);
      ctx.tfidf.push_back(scores[i]);
    }
  }
  return ctx;
}

std::size_t gold_rank(std::span<const double> probabilities, std::size_t gold) {
  if (gold >= probabilities.size()) throw UsageError("gold index out of range");
  std::size_t rank = 1;
  for (std::size_t k = 0; k < probabilities.size(); ++k)
    if (k != gold && probabilities[k] >= probabilities[gold]) ++rank;
  return rank;
}

double mean_reciprocal_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw UsageError("no questions to evaluate");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r < 1) throw UsageError("ranks start at 1");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

std::string PredictionReport::to_json() const {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["eval_context"] = eval_context;
  j["head"] = head;
  j["num_questions"] = questions.size();
  j["mrr"] = mrr;
  auto& qs = j["questions"] = nlohmann::ordered_json::array();
  for (const auto& q : questions) {
    nlohmann::ordered_json e;
    e["qid"] = q.qid;
    e["doc_id"] = q.doc_id;
    e["gold_index"] = q.gold_index;
    e["gold_rank"] = q.gold_rank;
    e["probabilities"] = q.probabilities;
    qs.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["valid_mrr"] = number_or_null(valid_mrr);
  return j.dump();
}

const std::vector<PreparedDocument>& Workspace::split(Split s) const {
  switch (s) {
    case Split::train:
      return train;
    case Split::valid:
      return valid;
    case Split::test:
      return test;
  }
  return train;
}

Workspace make_workspace(const EmbeddingTable& embeddings, const DatasetSplits& splits, std::size_t chunk_budget) {
  Workspace ws;
  ws.embeddings = &embeddings;
  ws.train = prepare_documents(splits.train, chunk_budget);
  ws.valid = prepare_documents(splits.valid, chunk_budget);
  ws.test = prepare_documents(splits.test, chunk_budget);
  ws.tfidf = fit_tfidf(ws.train);
  return ws;
}

// ---------------------------------------------------------------------------
// Training and evaluation

template <typename T>
ParameterStore<T> init_parameters(const ModelConfig& model, const TrainConfig& train) {
  model.validate();
  train.validate();
  ParameterStore<T> store;
  TriAttentionScorer<T>::init_parameters(model, store);
  if (train.head == HeadKind::wgn_mlp) {
    Rng rng = Rng::derive(model.seed, 0x77);
    init_wt_mlp(store, train.mlp_hidden, rng);
  }
  return store;
}

namespace {

template <typename T>
struct EmbeddedQuestion {
  Matrix<T> question;
  std::vector<Matrix<T>> contexts;
  std::vector<Matrix<T>> candidates;
};

template <typename T>
EmbeddedQuestion<T> embed_question(const EmbeddingTable& table, const PreparedDocument& doc,
                                   const PreparedQuestion& q, const QuestionContext& ctx) {
  EmbeddedQuestion<T> e;
  e.question = embed<T>(q.question, table);
  for (const auto& c : ctx.contexts) e.contexts.push_back(embed<T>(c, table));
  for (const auto& c : doc.candidate_tokens) e.candidates.push_back(embed<T>(c, table));
  return e;
}

template <typename T>
Var<T> question_log_probs(Tape<T>& tape, const TriAttentionScorer<T>& scorer, ParameterStore<T>& params,
                          const EmbeddedQuestion<T>& e, const QuestionContext& ctx, HeadKind head,
                          bool stop_feature_grad, bool train, Rng* rng) {
  Var<T> s = scorer.score_matrix(tape, e.question, e.contexts, e.candidates, train, rng);
  return head_log_probs(head, s, ctx.tfidf, &params, stop_feature_grad);
}

std::uint64_t eval_sample_seed(const PreparedQuestion& q) { return fnv1a(q.qid); }

void check_embeddings(const Workspace& ws, const ModelConfig& model) {
  if (!ws.embeddings) throw UsageError("workspace has no embeddings");
  if (ws.embeddings->dimension() != model.embed_dim)
    throw IncompatibleError("embedding dimension " + std::to_string(ws.embeddings->dimension()) +
                            " does not match embed_dim " + std::to_string(model.embed_dim));
}

}  // namespace

template <typename T>
CandidateDistribution predict(const Workspace& ws, const PreparedDocument& doc, const PreparedQuestion& question,
                              ParameterStore<T>& params, const ModelConfig& model, HeadKind head,
                              ContextRegime eval_context) {
  check_embeddings(ws, model);
  TriAttentionScorer<T> scorer(model, params);
  const QuestionContext ctx =
      build_context(doc, question, ws.tfidf, eval_context, head, false, eval_sample_seed(question));
  const auto e = embed_question<T>(*ws.embeddings, doc, question, ctx);
  Tape<T> tape;
  const Matrix<T> lp = question_log_probs(tape, scorer, params, e, ctx, head, false, false, nullptr).value();
  CandidateDistribution d;
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    d.log_p.push_back(static_cast<double>(lp(i, 0)));
    d.p.push_back(std::exp(static_cast<double>(lp(i, 0))));
  }
  return d;
}

template <typename T>
PredictionReport evaluate_mrr(const Workspace& ws, std::span<const PreparedDocument> docs,
                              ParameterStore<T>& params, const ModelConfig& model, HeadKind head,
                              ContextRegime eval_context) {
  PredictionReport report;
  report.eval_context = to_string(eval_context);
  report.head = std::string(to_string(head));
  std::vector<std::size_t> ranks;
  for (const auto& doc : docs) {
    for (const auto& q : doc.questions) {
      const CandidateDistribution d = predict(ws, doc, q, params, model, head, eval_context);
      if (!std::all_of(d.p.begin(), d.p.end(), [](double x) { return std::isfinite(x); }))
        throw NumericError("non-finite probabilities for question '" + q.qid + "'");
      QuestionPrediction pred;
      pred.qid = q.qid;
      pred.doc_id = doc.doc_id;
      pred.probabilities = d.p;
      pred.gold_index = q.gold;
      pred.gold_rank = gold_rank(d.p, q.gold);
      ranks.push_back(pred.gold_rank);
      report.questions.push_back(std::move(pred));
    }
  }
  report.mrr = mean_reciprocal_rank(ranks);
  return report;
}

template <typename T>
TrainOutcome<T> train(const Workspace& ws, ParameterStore<T> params, const ModelConfig& model,
                      const TrainConfig& config, const EpochCallback& on_epoch) {
  model.validate();
  config.validate();
  check_embeddings(ws, model);
  if (config.head == HeadKind::wgn_mlp && !params.find("wt_mlp.W1"))
    throw IncompatibleError("wgn_mlp head needs wt_mlp parameters");

  struct Item {
    std::size_t doc, question;
  };
  std::vector<Item> items;
  for (std::size_t d = 0; d < ws.train.size(); ++d)
    for (std::size_t q = 0; q < ws.train[d].questions.size(); ++q) items.push_back({d, q});
  if (items.empty()) throw UsageError("the training split has no questions");

  TriAttentionScorer<T> scorer(model, params);
  Adam<T> adam(config.learning_rate, config.beta1, config.beta2, config.adam_epsilon);
  Rng order_rng = Rng::derive(config.seed, 1);
  Rng dropout_rng = Rng::derive(config.seed, 2);
  Rng sample_rng = Rng::derive(config.seed, 3);
  const ContextRegime valid_context = default_eval_context(config.head, config.train_context);

  TrainOutcome<T> out;
  std::size_t stale = 0;
  params.zero_grad();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(items.begin(), items.end());
    double total = 0.0;
    for (const Item& it : items) {
      const auto& doc = ws.train[it.doc];
      const auto& q = doc.questions[it.question];
      const QuestionContext ctx =
          build_context(doc, q, ws.tfidf, config.train_context, config.head, true, sample_rng.next());
      const auto e = embed_question<T>(*ws.embeddings, doc, q, ctx);
      Tape<T> tape;
      Var<T> lp =
          question_log_probs(tape, scorer, params, e, ctx, config.head, config.stop_feature_grad, true, &dropout_rng);
      Var<T> loss = cross_entropy(lp, q.gold);
      const double l = static_cast<double>(loss.scalar());
      if (!std::isfinite(l)) throw NumericError("non-finite loss on question '" + q.qid + "'");
      total += l;
      tape.backward(loss);
      adam.step(params);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = total / static_cast<double>(items.size());
    bool improved = false;
    if (!ws.valid.empty()) {
      log.valid_mrr = evaluate_mrr<T>(ws, ws.valid, params, model, config.head, valid_context).mrr;
      improved = std::isnan(out.best_valid_mrr) || log.valid_mrr > out.best_valid_mrr;
    } else {
      improved = true;
    }
    if (improved) {
      out.best = params;
      out.best_epoch = epoch;
      out.best_valid_mrr = log.valid_mrr;
      stale = 0;
    } else {
      ++stale;
    }
    out.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stale >= config.patience) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid

std::vector<GridRow> default_grid_rows() {
  return {
      {HeadKind::wgn_mlp, ContextRegime::top(5)},  {HeadKind::wgn_static, ContextRegime::top(5)},
      {HeadKind::gn, ContextRegime::top(5)},       {HeadKind::gn, ContextRegime::uniform(5)},
      {HeadKind::vanilla, ContextRegime::top(1)},  {HeadKind::vanilla, ContextRegime::full()},
      {HeadKind::vanilla, ContextRegime::none()},
  };
}

std::vector<ContextRegime> default_grid_columns() {
  return {ContextRegime::top(1), ContextRegime::top(5), ContextRegime::full()};
}

std::string GridResult::to_csv() const {
  std::ostringstream os;
  os << "model,train_context";
  for (const auto& c : columns) os << ',' << to_string(c);
  os << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    os << to_string(rows[r].head) << ',' << to_string(rows[r].train_context);
    for (double v : mrr[r]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

template <typename T>
GridResult run_grid(const Workspace& ws, std::span<const GridRow> rows, std::span<const ContextRegime> columns,
                    const ModelConfig& model, const TrainConfig& base, Split eval_split,
                    const std::function<void(const GridRow&, const EpochLog&)>& on_epoch) {
  if (rows.empty() || columns.empty()) throw UsageError("grid needs at least one row and one column");
  const auto& docs = ws.split(eval_split);
  GridResult result;
  result.rows.assign(rows.begin(), rows.end());
  result.columns.assign(columns.begin(), columns.end());
  for (const auto& row : rows) {
    TrainConfig cfg = base;
    cfg.head = row.head;
    cfg.train_context = row.train_context;
    EpochCallback cb;
    if (on_epoch) cb = [&](const EpochLog& log) { on_epoch(row, log); };
    auto outcome = train<T>(ws, init_parameters<T>(model, cfg), model, cfg, cb);
    std::vector<double> line;
    for (const auto& col : columns)
      line.push_back(
          evaluate_mrr<T>(ws, docs, outcome.best, model, row.head, effective_eval_context(row.train_context, col))
              .mrr);
    result.mrr.push_back(std::move(line));
  }
  return result;
}

#define MCQA_INSTANTIATE(T)                                                                                      \
  template class Adam<T>;                                                                                        \
  template ParameterStore<T> init_parameters<T>(const ModelConfig&, const TrainConfig&);                         \
  template TrainOutcome<T> train<T>(const Workspace&, ParameterStore<T>, const ModelConfig&, const TrainConfig&, \
                                    const EpochCallback&);                                                       \
  template PredictionReport evaluate_mrr<T>(const Workspace&, std::span<const PreparedDocument>,                 \
                                            ParameterStore<T>&, const ModelConfig&, HeadKind, ContextRegime);    \
  template CandidateDistribution predict<T>(const Workspace&, const PreparedDocument&, const PreparedQuestion&,  \
                                            ParameterStore<T>&, const ModelConfig&, HeadKind, ContextRegime);    \
  template GridResult run_grid<T>(const Workspace&, std::span<const GridRow>, std::span<const ContextRegime>,    \
                                  const ModelConfig&, const TrainConfig&, Split,                                 \
                                  const std::function<void(const GridRow&, const EpochLog&)>&);

MCQA_INSTANTIATE(float)
MCQA_INSTANTIATE(double)

#undef MCQA_INSTANTIATE

}  // namespace mcqa
