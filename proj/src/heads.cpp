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

#include "mcqa/heads.hpp"

#include <cmath>
#include <string>

#include "mcqa/error.hpp"
#include "mcqa/model.hpp"

namespace mcqa {

HeadKind parse_head(std::string_view name) {
  if (name == "vanilla") return HeadKind::vanilla;
  if (name == "gn") return HeadKind::gn;
  if (name == "wgn_static") return HeadKind::wgn_static;
  if (name == "wgn_mlp") return HeadKind::wgn_mlp;
  throw ConfigError("unknown head '" + std::string(name) + "' (expected vanilla|gn|wgn_static|wgn_mlp)");
}

std::string_view to_string(HeadKind head) {
  switch (head) {
    case HeadKind::vanilla:
      return "vanilla";
    case HeadKind::gn:
      return "gn";
    case HeadKind::wgn_static:
      return "wgn_static";
    case HeadKind::wgn_mlp:
      return "wgn_mlp";
  }
  return "?";
}

template <typename T>
void init_wt_mlp(ParameterStore<T>& store, std::size_t hidden, Rng& rng) {
  if (hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  const auto h = static_cast<Eigen::Index>(hidden);
  store.add("wt_mlp.W1", glorot_uniform<T>(kWtMlpFeatures, h, rng));
  store.add("wt_mlp.b1", Matrix<T>::Zero(1, h));
  store.add("wt_mlp.W2", glorot_uniform<T>(h, 1, rng));
  store.add("wt_mlp.b2", Matrix<T>::Zero(1, 1));
}

template <typename T>
Var<T> vanilla_log_probs(Var<T> s) {
  if (s.cols() != 1)
    throw UsageError("vanilla head needs a single context column, got " + std::to_string(s.cols()));
  return log_softmax(s, 0);
}

template <typename T>
Var<T> global_norm_log_probs(Var<T> s) {
  // log sum_j e^{s_ij} - log sum_ij e^{s_ij}
  return sub(logsumexp(s, 1), logsumexp_all(s));
}

template <typename T>
Var<T> weighted_global_norm_log_probs(Var<T> s, Var<T> log_weights) {
  if (log_weights.rows() != 1 || log_weights.cols() != s.cols())
    throw ShapeError("chunk weights must be 1 x " + std::to_string(s.cols()));
  return global_norm_log_probs(add(s, log_weights));
}

template <typename T>
Var<T> wt_mlp_features(Var<T> s, Var<T> h) {
  if (h.rows() != 1 || h.cols() != s.cols()) throw ShapeError("tf-idf row must be 1 x " + std::to_string(s.cols()));
  const Var<T> rows[] = {h, max(s, 0), min(s, 0), mean(s, 0), stddev(s, 0)};
  return transpose(concat<T>(rows, 0));
}

template <typename T>
Var<T> wt_mlp_log_weights(Var<T> s, std::span<const double> tfidf, ParameterStore<T>& store,
                          bool stop_feature_grad) {
  Tape<T>& tape = s.tape();
  if (tfidf.size() != static_cast<std::size_t>(s.cols()))
    throw ShapeError("got " + std::to_string(tfidf.size()) + " tf-idf scores for " + std::to_string(s.cols()) +
                     " chunks");
  Matrix<T> hv(1, s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) hv(0, j) = static_cast<T>(tfidf[static_cast<std::size_t>(j)]);
  Var<T> source = stop_feature_grad ? tape.constant(s.value()) : s;
  Var<T> f = wt_mlp_features(source, tape.constant(std::move(hv)));
  Var<T> hidden = relu(add(matmul(f, tape.parameter(store.at("wt_mlp.W1"))), tape.parameter(store.at("wt_mlp.b1"))));
  Var<T> raw = add(matmul(hidden, tape.parameter(store.at("wt_mlp.W2"))), tape.parameter(store.at("wt_mlp.b2")));
  return transpose(raw);
}

template <typename T>
Var<T> head_log_probs(HeadKind head, Var<T> s, std::span<const double> tfidf, ParameterStore<T>* store,
                      bool stop_feature_grad) {
  switch (head) {
    case HeadKind::vanilla:
      return vanilla_log_probs(s);
    case HeadKind::gn:
      return global_norm_log_probs(s);
    case HeadKind::wgn_static: {
      const auto z = static_chunk_weights(tfidf);
      if (z.size() != static_cast<std::size_t>(s.cols())) throw ShapeError("tf-idf count does not match chunks");
      Matrix<T> lz(1, s.cols());
      for (Eigen::Index j = 0; j < s.cols(); ++j) lz(0, j) = static_cast<T>(std::log(z[static_cast<std::size_t>(j)]));
      return weighted_global_norm_log_probs(s, s.tape().constant(std::move(lz)));
    }
    case HeadKind::wgn_mlp:
      if (!store) throw UsageError("wgn_mlp head needs its parameters");
      return weighted_global_norm_log_probs(s, wt_mlp_log_weights(s, tfidf, *store, stop_feature_grad));
  }
  throw UsageError("unknown head");
}

template <typename T>
Var<T> cross_entropy(Var<T> log_probs, std::size_t gold) {
  if (gold >= static_cast<std::size_t>(log_probs.rows()))
    throw UsageError("gold index " + std::to_string(gold) + " out of range");
  return scale(element(log_probs, static_cast<Eigen::Index>(gold), 0), T(-1));
}

// ---------------------------------------------------------------------------
// Plain versions

namespace {

void check_finite(const Matrix<double>& s) {
  if (s.size() == 0) throw ShapeError("empty score matrix");
  if (!s.allFinite()) throw NumericError("score matrix has non-finite entries");
}

CandidateDistribution to_distribution(const Matrix<double>& log_p) {
  CandidateDistribution d;
  for (Eigen::Index i = 0; i < log_p.rows(); ++i) {
    d.log_p.push_back(log_p(i, 0));
    d.p.push_back(std::exp(log_p(i, 0)));
  }
  return d;
}

}  // namespace

CandidateDistribution vanilla_head(const Matrix<double>& scores) {
  check_finite(scores);
  Tape<double> tape;
  return to_distribution(vanilla_log_probs(tape.constant(scores)).value());
}

CandidateDistribution global_norm_head(const Matrix<double>& scores) {
  check_finite(scores);
  Tape<double> tape;
  return to_distribution(global_norm_log_probs(tape.constant(scores)).value());
}

CandidateDistribution weighted_global_norm_head(const Matrix<double>& scores, std::span<const double> z) {
  check_finite(scores);
  if (z.size() != static_cast<std::size_t>(scores.cols()))
    throw ShapeError("got " + std::to_string(z.size()) + " chunk weights for " + std::to_string(scores.cols()) +
                     " chunks");
  Matrix<double> lz(1, scores.cols());
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!(z[j] > 0.0) || !std::isfinite(z[j]))
      throw WeightDomainError("chunk weight z_" + std::to_string(j) + " = " + std::to_string(z[j]) +
                              " is not positive");
    lz(0, static_cast<Eigen::Index>(j)) = std::log(z[j]);
  }
  Tape<double> tape;
  return to_distribution(weighted_global_norm_log_probs(tape.constant(scores), tape.constant(lz)).value());
}

std::vector<double> static_chunk_weights(std::span<const double> tfidf) {
  std::vector<double> z;
  for (double h : tfidf) {
    if (!(h >= 0.0) || !std::isfinite(h)) throw WeightDomainError("tf-idf score must be non-negative");
    z.push_back(h + kStaticWeightEpsilon);
  }
  return z;
}

WtMlpParams WtMlpParams::zeros(std::size_t hidden) {
  const auto h = static_cast<Eigen::Index>(hidden);
  return WtMlpParams{Matrix<double>::Zero(kWtMlpFeatures, h), Matrix<double>::Zero(1, h),
                     Matrix<double>::Zero(h, 1), Matrix<double>::Zero(1, 1)};
}

Matrix<double> wt_mlp_features(const Matrix<double>& scores, std::span<const double> tfidf) {
  check_finite(scores);
  if (tfidf.size() != static_cast<std::size_t>(scores.cols())) throw ShapeError("tf-idf count does not match chunks");
  Tape<double> tape;
  Matrix<double> h(1, scores.cols());
  for (Eigen::Index j = 0; j < scores.cols(); ++j) h(0, j) = tfidf[static_cast<std::size_t>(j)];
  return wt_mlp_features(tape.constant(scores), tape.constant(h)).value();
}

std::vector<double> wt_mlp_weights(const Matrix<double>& scores, std::span<const double> tfidf,
                                   const WtMlpParams& params) {
  ParameterStore<double> store;
  store.add("wt_mlp.W1", params.w1);
  store.add("wt_mlp.b1", params.b1);
  store.add("wt_mlp.W2", params.w2);
  store.add("wt_mlp.b2", params.b2);
  check_finite(scores);
  Tape<double> tape;
  const Matrix<double> raw = wt_mlp_log_weights(tape.constant(scores), tfidf, store, true).value();
  std::vector<double> z;
  for (Eigen::Index j = 0; j < raw.cols(); ++j) z.push_back(std::exp(raw(0, j)));
  return z;
}

double cross_entropy_loss(const CandidateDistribution& dist, std::size_t gold) {
  if (gold >= dist.log_p.size()) throw UsageError("gold index " + std::to_string(gold) + " out of range");
  return -dist.log_p[gold];
}

#define MCQA_INSTANTIATE(T)                                                                            \
  template void init_wt_mlp(ParameterStore<T>&, std::size_t, Rng&);                                    \
  template Var<T> vanilla_log_probs(Var<T>);                                                           \
  template Var<T> global_norm_log_probs(Var<T>);                                                       \
  template Var<T> weighted_global_norm_log_probs(Var<T>, Var<T>);                                      \
  template Var<T> wt_mlp_features(Var<T>, Var<T>);                                                     \
  template Var<T> wt_mlp_log_weights(Var<T>, std::span<const double>, ParameterStore<T>&, bool);       \
  template Var<T> head_log_probs(HeadKind, Var<T>, std::span<const double>, ParameterStore<T>*, bool); \
  template Var<T> cross_entropy(Var<T>, std::size_t);

MCQA_INSTANTIATE(float)
MCQA_INSTANTIATE(double)
MCQA_INSTANTIATE(long double)

#undef MCQA_INSTANTIATE

}  // namespace mcqa
