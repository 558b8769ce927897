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

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mcqa/autodiff.hpp"

namespace mcqa {

/// How per-chunk candidate scores become one distribution.
///   vanilla     softmax over a single column
///   gn          p_i = sum_j e^{s_ij} / sum_ij e^{s_ij}
///   wgn_static  gn with chunk weights z_j = h_j + kStaticWeightEpsilon
///   wgn_mlp     gn with chunk weights z_j = exp(MLP(chunk features))
enum class HeadKind { vanilla, gn, wgn_static, wgn_mlp };

HeadKind parse_head(std::string_view name);
std::string_view to_string(HeadKind head);

inline constexpr double kStaticWeightEpsilon = 1e-6;
inline constexpr Eigen::Index kWtMlpFeatures = 5;

/// Registers wt_mlp.W1 (5 x hidden), wt_mlp.b1, wt_mlp.W2 (hidden x 1) and
/// wt_mlp.b2. Weights Glorot-uniform, biases zero.
template <typename T>
void init_wt_mlp(ParameterStore<T>& store, std::size_t hidden, Rng& rng);

// Tape versions. S is n candidates x m chunks; results are n x 1 log
// probabilities.

/// Throws UsageError unless S has exactly one column.
template <typename T> Var<T> vanilla_log_probs(Var<T> s);
template <typename T> Var<T> global_norm_log_probs(Var<T> s);
/// `log_weights` is 1 x m; the weighted head is gn over s_ij + ln z_j.
template <typename T> Var<T> weighted_global_norm_log_probs(Var<T> s, Var<T> log_weights);

/// m x 5 per-chunk features [h_j, max_i s_ij, min_i s_ij, mean_i s_ij,
/// std_i s_ij] (population deviation). `h` is 1 x m.
template <typename T> Var<T> wt_mlp_features(Var<T> s, Var<T> h);

/// 1 x m raw MLP outputs, i.e. ln z_j. With `stop_feature_grad` the score
/// statistics enter as constants and no gradient reaches the scorer through
/// them.
template <typename T>
Var<T> wt_mlp_log_weights(Var<T> s, std::span<const double> tfidf, ParameterStore<T>& store,
                          bool stop_feature_grad);

/// Dispatch on `head`. `store` is needed only for wgn_mlp.
template <typename T>
Var<T> head_log_probs(HeadKind head, Var<T> s, std::span<const double> tfidf, ParameterStore<T>* store,
                      bool stop_feature_grad = false);

/// -log p_gold as a 1 x 1 Var.
template <typename T> Var<T> cross_entropy(Var<T> log_probs, std::size_t gold);

// Plain double-precision versions.

struct CandidateDistribution {
  std::vector<double> p;
  std::vector<double> log_p;
};

CandidateDistribution vanilla_head(const Matrix<double>& scores);
CandidateDistribution global_norm_head(const Matrix<double>& scores);
/// Throws WeightDomainError if any z_j <= 0 (or is not finite), ShapeError if
/// |z| != m.
CandidateDistribution weighted_global_norm_head(const Matrix<double>& scores, std::span<const double> z);

/// z_j = h_j + kStaticWeightEpsilon. Throws WeightDomainError for h_j < 0.
std::vector<double> static_chunk_weights(std::span<const double> tfidf);

struct WtMlpParams {
  Matrix<double> w1;  // 5 x hidden
  Matrix<double> b1;  // 1 x hidden
  Matrix<double> w2;  // hidden x 1
  Matrix<double> b2;  // 1 x 1

  static WtMlpParams zeros(std::size_t hidden);
};

Matrix<double> wt_mlp_features(const Matrix<double>& scores, std::span<const double> tfidf);
std::vector<double> wt_mlp_weights(const Matrix<double>& scores, std::span<const double> tfidf,
                                   const WtMlpParams& params);

/// -log p_gold from the stored log probabilities. Throws UsageError when
/// gold is out of range.
double cross_entropy_loss(const CandidateDistribution& dist, std::size_t gold);

}  // namespace mcqa
