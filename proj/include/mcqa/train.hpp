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

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqa/autodiff.hpp"
#include "mcqa/corpus.hpp"
#include "mcqa/heads.hpp"
#include "mcqa/model.hpp"
#include "mcqa/retrieval.hpp"
#include "mcqa/text.hpp"

namespace mcqa {

/// Which part of the document the scorer sees for a question.
///   top_K      the K best tf-idf chunks
///   uniform_K  K chunks sampled uniformly
///   full       every chunk
///   none       a single zero token
struct ContextRegime {
  enum class Kind { top, uniform, full, none };
  Kind kind = Kind::top;
  std::size_t k = 5;

  static ContextRegime top(std::size_t k) { return {Kind::top, k}; }
  static ContextRegime uniform(std::size_t k) { return {Kind::uniform, k}; }
  static ContextRegime full() { return {Kind::full, 0}; }
  static ContextRegime none() { return {Kind::none, 0}; }

  bool operator==(const ContextRegime&) const = default;
};

/// Accepts top_N, uniform_N, full, none. Throws ConfigError.
ContextRegime parse_context(std::string_view name);
std::string to_string(ContextRegime regime);

struct TrainConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t max_epochs = 10;
  /// Epochs without a validation improvement before stopping.
  std::size_t patience = 3;
  ContextRegime train_context = ContextRegime::top(5);
  HeadKind head = HeadKind::wgn_mlp;
  std::size_t mlp_hidden = 16;
  bool stop_feature_grad = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

/// Context used for evaluation when none is requested: a single chunk for
/// the vanilla scorer trained on one chunk, no context for a model trained
/// without context, five chunks otherwise.
ContextRegime default_eval_context(HeadKind head, ContextRegime train_context);

/// A model trained without context is always evaluated without context.
ContextRegime effective_eval_context(ContextRegime train_context, ContextRegime requested);

/// Adam with bias correction. Moments are allocated on the first step.
template <typename T>
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);

  /// theta -= lr * m_hat / (sqrt(v_hat) + eps), then zeroes the gradients.
  /// Throws NumericError naming the parameter if any gradient is not finite;
  /// no parameter is modified in that case.
  void step(ParameterStore<T>& params);

  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

struct PreparedQuestion {
  std::string qid;
  std::vector<Token> question;
  std::vector<Token> answer;
  std::size_t gold = 0;
};

/// A document tokenized, chunked and paired with its candidate set.
struct PreparedDocument {
  std::string doc_id;
  std::vector<Token> tokens;
  std::vector<Chunk> chunks;
  std::vector<std::string> candidates;
  std::vector<std::vector<Token>> candidate_tokens;
  std::vector<PreparedQuestion> questions;
};

/// Throws IntegrityError for a question whose gold answer is not among the
/// document's candidates.
std::vector<PreparedDocument> prepare_documents(std::span<const DocumentRecord> docs,
                                                std::size_t chunk_budget = kDefaultChunkBudget);

/// Fits on every chunk of the given (training) documents.
TfidfModel fit_tfidf(std::span<const PreparedDocument> docs);

/// The contexts the scorer sees for one question, with tf-idf weights.
struct QuestionContext {
  std::vector<std::vector<Token>> contexts;
  std::vector<double> tfidf;
  /// Chunk indices in document order; empty for the no-context regime.
  std::vector<std::size_t> chunk_indices;
};

/// Ranks chunks against the question (plus the gold answer when
/// `training`), selects per `regime` and shapes the result for `head`: the
/// vanilla head sees the selected chunks joined into one context, the
/// normalizing heads see one context per chunk.
QuestionContext build_context(const PreparedDocument& doc, const PreparedQuestion& question,
                              const TfidfModel& tfidf, ContextRegime regime, HeadKind head, bool training,
                              std::uint64_t sample_seed);

struct QuestionPrediction {
  std::string qid;
  std::string doc_id;
  std::vector<double> probabilities;
  std::size_t gold_index = 0;
  std::size_t gold_rank = 0;
};

struct PredictionReport {
  std::string split;
  std::string eval_context;
  std::string head;
  std::vector<QuestionPrediction> questions;
  double mrr = 0.0;

  std::string to_json() const;
};

/// 1 + the number of other candidates whose probability is >= the gold one.
std::size_t gold_rank(std::span<const double> probabilities, std::size_t gold);

/// Throws UsageError on an empty input.
double mean_reciprocal_rank(std::span<const std::size_t> ranks);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// NaN when there is no validation split.
  double valid_mrr = std::numeric_limits<double>::quiet_NaN();

  std::string to_json() const;
};

/// Everything fixed across runs on one dataset.
struct Workspace {
  const EmbeddingTable* embeddings = nullptr;
  TfidfModel tfidf;
  std::vector<PreparedDocument> train;
  std::vector<PreparedDocument> valid;
  std::vector<PreparedDocument> test;

  const std::vector<PreparedDocument>& split(Split s) const;
};

/// Prepares the three splits and fits tf-idf on the training chunks.
Workspace make_workspace(const EmbeddingTable& embeddings, const DatasetSplits& splits,
                         std::size_t chunk_budget = kDefaultChunkBudget);

/// Scorer parameters (from model.seed) plus Wt-MLP parameters for wgn_mlp.
template <typename T>
ParameterStore<T> init_parameters(const ModelConfig& model, const TrainConfig& train);

template <typename T>
struct TrainOutcome {
  ParameterStore<T> best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_valid_mrr = std::numeric_limits<double>::quiet_NaN();
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// One Adam step per question over shuffled training questions. Keeps the
/// parameters of the epoch with the best validation MRR (the last epoch when
/// there is no validation split) and stops after `patience` epochs without
/// improvement.
template <typename T>
TrainOutcome<T> train(const Workspace& ws, ParameterStore<T> params, const ModelConfig& model,
                      const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Per-question distributions and MRR. Does not modify `params`.
template <typename T>
PredictionReport evaluate_mrr(const Workspace& ws, std::span<const PreparedDocument> docs,
                              ParameterStore<T>& params, const ModelConfig& model, HeadKind head,
                              ContextRegime eval_context);

/// Scores and normalizes a single question (inference mode).
template <typename T>
CandidateDistribution predict(const Workspace& ws, const PreparedDocument& doc, const PreparedQuestion& question,
                              ParameterStore<T>& params, const ModelConfig& model, HeadKind head,
                              ContextRegime eval_context);

struct GridRow {
  HeadKind head = HeadKind::gn;
  ContextRegime train_context = ContextRegime::top(5);

  bool operator==(const GridRow&) const = default;
};

/// Rows mirror the model/training-context rows of the comparison table.
std::vector<GridRow> default_grid_rows();
std::vector<ContextRegime> default_grid_columns();

struct GridResult {
  std::vector<GridRow> rows;
  std::vector<ContextRegime> columns;
  std::vector<std::vector<double>> mrr;  // rows x columns

  /// "model,train_context,<col>..." header, one line per row.
  std::string to_csv() const;
};

/// Trains every row (with `base` for everything but head and context) and
/// evaluates each trained model on `eval_split` under every column.
template <typename T>
GridResult run_grid(const Workspace& ws, std::span<const GridRow> rows, std::span<const ContextRegime> columns,
                    const ModelConfig& model, const TrainConfig& base, Split eval_split,
                    const std::function<void(const GridRow&, const EpochLog&)>& on_epoch = {});

}  // namespace mcqa
