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
#include <span>
#include <string>
#include <vector>

#include "mcqa/autodiff.hpp"

namespace mcqa {

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t recurrent_hidden = 128;
  std::size_t linear_hidden = 256;
  std::size_t gru_layers = 2;
  std::size_t ffn_layers = 3;
  double dropout_rate = 0.2;
  /// Projection width of every attention instance; 0 keeps each W square.
  std::size_t attention_dim = 0;
  Precision precision = Precision::f32;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Weights of one bidirectional GRU layer.
template <typename T>
struct BiGruLayer {
  Parameter<T>* w_fwd = nullptr;
  Parameter<T>* u_fwd = nullptr;
  Parameter<T>* b_fwd = nullptr;
  Parameter<T>* w_bwd = nullptr;
  Parameter<T>* u_bwd = nullptr;
  Parameter<T>* b_bwd = nullptr;
};

/// For each row u of `queries`: softmax_i(relu(u W) . relu(v_i W)) weighted
/// sum of the rows v_i of `values`. Throws UsageError when `values` is empty.
template <typename T>
Var<T> attn_seq(Var<T> queries, Var<T> values, Var<T> w);

/// softmax over rows of (H w), then the weighted sum of the rows of H.
template <typename T>
Var<T> attn_self(Var<T> h, Var<T> w);

/// Stacked bidirectional GRU; forward and backward states are concatenated
/// per token (len x 2h). Dropout is applied to the input of every layer when
/// `train` is set.
template <typename T>
Var<T> bigru_encode(Var<T> x, std::span<const BiGruLayer<T>> layers, std::span<const Segment> segments,
                    double dropout_rate, bool train, Rng* rng);

/// The tri-attention scorer. Parameters live in a caller-owned store; the
/// scorer only records operations on tapes.
template <typename T>
class TriAttentionScorer {
 public:
  /// Registers every scorer parameter in `store`. Weights are Glorot-uniform
  /// from `config.seed`, biases zero.
  static void init_parameters(const ModelConfig& config, ParameterStore<T>& store);

  /// Binds to parameters already present in `store`. Throws
  /// IncompatibleError when one is missing or has the wrong shape.
  TriAttentionScorer(const ModelConfig& config, ParameterStore<T>& store);

  const ModelConfig& config() const noexcept { return config_; }

  /// n x m scores: column j scores every candidate against contexts[j].
  /// Inputs are embedded token matrices; an empty matrix is replaced by a
  /// single zero row.
  Var<T> score_matrix(Tape<T>& tape, const Matrix<T>& question, std::span<const Matrix<T>> contexts,
                      std::span<const Matrix<T>> candidates, bool train, Rng* rng) const;

  /// Single context column (n x 1).
  Var<T> score_candidates(Tape<T>& tape, const Matrix<T>& question, const Matrix<T>& context,
                          std::span<const Matrix<T>> candidates, bool train, Rng* rng) const;

  /// Inference-mode convenience: the score matrix as plain values.
  Matrix<T> scores(const Matrix<T>& question, std::span<const Matrix<T>> contexts,
                   std::span<const Matrix<T>> candidates) const;

 private:
  struct Encoded;
  Encoded encode_shared(Tape<T>& tape, const Matrix<T>& question, std::span<const Matrix<T>> candidates,
                        bool train, Rng* rng) const;
  Var<T> score_column(Tape<T>& tape, const Encoded& shared, const Matrix<T>& context, bool train, Rng* rng) const;

  ModelConfig config_;
  ParameterStore<T>* store_;
  Parameter<T>* attn_context_query_;
  Parameter<T>* attn_answer_query_;
  Parameter<T>* attn_answer_context_;
  Parameter<T>* attn_summary_query_;
  Parameter<T>* self_question_;
  Parameter<T>* self_answer_;
  std::vector<BiGruLayer<T>> gru_question_;
  std::vector<BiGruLayer<T>> gru_context_;
  std::vector<BiGruLayer<T>> gru_answer_;
  std::vector<std::pair<Parameter<T>*, Parameter<T>*>> ffn_;
};

/// Glorot-uniform matrix: U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)).
template <typename T>
Matrix<T> glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

}  // namespace mcqa
