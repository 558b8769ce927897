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

#include "mcqa/model.hpp"

#include <cmath>

#include "mcqa/error.hpp"

namespace mcqa {

void ModelConfig::validate() const {
  if (embed_dim < 1 || recurrent_hidden < 1 || linear_hidden < 1 || gru_layers < 1 || ffn_layers < 1)
    throw ConfigError("model dimensions and layer counts must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

template <typename T>
Matrix<T> glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<T> m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

template <typename T>
Var<T> attn_seq(Var<T> queries, Var<T> values, Var<T> w) {
  if (values.rows() == 0) throw UsageError("attention over an empty sequence");
  Var<T> ru = relu(matmul(queries, w));
  Var<T> rv = relu(matmul(values, w));
  Var<T> alpha = softmax(matmul(ru, transpose(rv)), 1);
  return matmul(alpha, values);
}

template <typename T>
Var<T> attn_self(Var<T> h, Var<T> w) {
  if (h.rows() == 0) throw UsageError("self attention over an empty sequence");
  return segment_attention_pool(h, matmul(h, w), std::span<const Segment>());
}

template <typename T>
Var<T> bigru_encode(Var<T> x, std::span<const BiGruLayer<T>> layers, std::span<const Segment> segments,
                    double dropout_rate, bool train, Rng* rng) {
  if (x.rows() == 0) throw UsageError("GRU over an empty sequence");
  Tape<T>& tape = x.tape();
  Var<T> h = x;
  for (const auto& layer : layers) {
    Var<T> in = dropout(h, dropout_rate, train, rng);
    Var<T> fwd = gru(in, tape.parameter(*layer.w_fwd), tape.parameter(*layer.u_fwd), tape.parameter(*layer.b_fwd),
                     segments, false);
    Var<T> bwd = gru(in, tape.parameter(*layer.w_bwd), tape.parameter(*layer.u_bwd), tape.parameter(*layer.b_bwd),
                     segments, true);
    const Var<T> parts[] = {fwd, bwd};
    h = concat<T>(parts, 1);
  }
  return h;
}

namespace {

std::size_t att_dim(const ModelConfig& c, std::size_t input) { return c.attention_dim ? c.attention_dim : input; }

template <typename T>
void add_gru_stack(ParameterStore<T>& store, const std::string& prefix, std::size_t input, const ModelConfig& c,
                   Rng& rng) {
  const auto h = static_cast<Eigen::Index>(c.recurrent_hidden);
  for (std::size_t l = 0; l < c.gru_layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? input : 2 * c.recurrent_hidden);
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base = prefix + ".l" + std::to_string(l) + "." + dir;
      store.add(base + ".W", glorot_uniform<T>(in, 3 * h, rng));
      store.add(base + ".U", glorot_uniform<T>(h, 3 * h, rng));
      store.add(base + ".b", Matrix<T>::Zero(1, 3 * h));
    }
  }
}

template <typename T>
Parameter<T>* bind_param(ParameterStore<T>& store, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  Parameter<T>* p = store.find(name);
  if (!p) throw IncompatibleError("checkpoint lacks parameter '" + name + "'");
  if (p->value.rows() != rows || p->value.cols() != cols)
    throw IncompatibleError("parameter '" + name + "' is [" + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()) + "], model expects [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "]");
  return p;
}

template <typename T>
std::vector<BiGruLayer<T>> bind_gru(ParameterStore<T>& store, const std::string& prefix, std::size_t input,
                                    const ModelConfig& c) {
  std::vector<BiGruLayer<T>> layers;
  const auto h = static_cast<Eigen::Index>(c.recurrent_hidden);
  for (std::size_t l = 0; l < c.gru_layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? input : 2 * c.recurrent_hidden);
    const std::string base = prefix + ".l" + std::to_string(l) + ".";
    BiGruLayer<T> layer;
    layer.w_fwd = bind_param(store, base + "fwd.W", in, 3 * h);
    layer.u_fwd = bind_param(store, base + "fwd.U", h, 3 * h);
    layer.b_fwd = bind_param(store, base + "fwd.b", 1, 3 * h);
    layer.w_bwd = bind_param(store, base + "bwd.W", in, 3 * h);
    layer.u_bwd = bind_param(store, base + "bwd.U", h, 3 * h);
    layer.b_bwd = bind_param(store, base + "bwd.b", 1, 3 * h);
    layers.push_back(layer);
  }
  return layers;
}

template <typename T>
Matrix<T> guard(const Matrix<T>& m, std::size_t dim) {
  if (m.rows() > 0) {
    if (m.cols() != static_cast<Eigen::Index>(dim))
      throw ShapeError("embedded input has " + std::to_string(m.cols()) + " columns, model expects " +
                       std::to_string(dim));
    return m;
  }
  return Matrix<T>::Zero(1, static_cast<Eigen::Index>(dim));
}

}  // namespace

template <typename T>
void TriAttentionScorer<T>::init_parameters(const ModelConfig& c, ParameterStore<T>& store) {
  c.validate();
  Rng rng(c.seed);
  const auto e = static_cast<Eigen::Index>(c.embed_dim);
  const auto h2 = static_cast<Eigen::Index>(2 * c.recurrent_hidden);
  const auto ae = static_cast<Eigen::Index>(att_dim(c, c.embed_dim));
  const auto ah = static_cast<Eigen::Index>(att_dim(c, 2 * c.recurrent_hidden));
  store.add("attn.context_query.W", glorot_uniform<T>(e, ae, rng));
  store.add("attn.answer_query.W", glorot_uniform<T>(e, ae, rng));
  store.add("attn.answer_context.W", glorot_uniform<T>(e, ae, rng));
  store.add("attn.summary_query.W", glorot_uniform<T>(h2, ah, rng));
  store.add("self.question.w", glorot_uniform<T>(h2, 1, rng));
  store.add("self.answer.w", glorot_uniform<T>(h2, 1, rng));
  add_gru_stack(store, "gru.question", c.embed_dim, c, rng);
  add_gru_stack(store, "gru.context", 2 * c.embed_dim, c, rng);
  add_gru_stack(store, "gru.answer", 3 * c.embed_dim, c, rng);
  const auto lh = static_cast<Eigen::Index>(c.linear_hidden);
  for (std::size_t l = 0; l < c.ffn_layers; ++l) {
    const Eigen::Index in = l == 0 ? 2 : lh;
    const Eigen::Index out = l + 1 == c.ffn_layers ? 1 : lh;
    store.add("ffn.l" + std::to_string(l) + ".W", glorot_uniform<T>(in, out, rng));
    store.add("ffn.l" + std::to_string(l) + ".b", Matrix<T>::Zero(1, out));
  }
}

template <typename T>
TriAttentionScorer<T>::TriAttentionScorer(const ModelConfig& c, ParameterStore<T>& store)
    : config_(c), store_(&store) {
  c.validate();
  const auto e = static_cast<Eigen::Index>(c.embed_dim);
  const auto h2 = static_cast<Eigen::Index>(2 * c.recurrent_hidden);
  const auto ae = static_cast<Eigen::Index>(att_dim(c, c.embed_dim));
  const auto ah = static_cast<Eigen::Index>(att_dim(c, 2 * c.recurrent_hidden));
  attn_context_query_ = bind_param(store, "attn.context_query.W", e, ae);
  attn_answer_query_ = bind_param(store, "attn.answer_query.W", e, ae);
  attn_answer_context_ = bind_param(store, "attn.answer_context.W", e, ae);
  attn_summary_query_ = bind_param(store, "attn.summary_query.W", h2, ah);
  self_question_ = bind_param(store, "self.question.w", h2, 1);
  self_answer_ = bind_param(store, "self.answer.w", h2, 1);
  gru_question_ = bind_gru(store, "gru.question", c.embed_dim, c);
  gru_context_ = bind_gru(store, "gru.context", 2 * c.embed_dim, c);
  gru_answer_ = bind_gru(store, "gru.answer", 3 * c.embed_dim, c);
  const auto lh = static_cast<Eigen::Index>(c.linear_hidden);
  for (std::size_t l = 0; l < c.ffn_layers; ++l) {
    const Eigen::Index in = l == 0 ? 2 : lh;
    const Eigen::Index out = l + 1 == c.ffn_layers ? 1 : lh;
    ffn_.emplace_back(bind_param(store, "ffn.l" + std::to_string(l) + ".W", in, out),
                      bind_param(store, "ffn.l" + std::to_string(l) + ".b", 1, out));
  }
}

template <typename T>
struct TriAttentionScorer<T>::Encoded {
  Var<T> question;          // |Q| x e
  Var<T> question_vec;      // 1 x 2h
  Var<T> answers;           // sum |a| x e, candidates stacked
  Var<T> answers_on_query;  // sum |a| x e
  std::vector<Segment> segments;
};

template <typename T>
typename TriAttentionScorer<T>::Encoded TriAttentionScorer<T>::encode_shared(Tape<T>& tape,
                                                                            const Matrix<T>& question,
                                                                            std::span<const Matrix<T>> candidates,
                                                                            bool train, Rng* rng) const {
  if (candidates.empty()) throw UsageError("scoring needs at least one candidate");
  const std::size_t e = config_.embed_dim;
  Encoded enc;
  enc.question = tape.constant(guard(question, e));
  Var<T> hq = bigru_encode<T>(enc.question, gru_question_, {}, config_.dropout_rate, train, rng);
  enc.question_vec = attn_self(hq, tape.parameter(*self_question_));

  Eigen::Index total = 0;
  std::vector<Matrix<T>> guarded;
  for (const auto& c : candidates) {
    guarded.push_back(guard(c, e));
    enc.segments.push_back(Segment{total, guarded.back().rows()});
    total += guarded.back().rows();
  }
  Matrix<T> stacked(total, static_cast<Eigen::Index>(e));
  for (std::size_t i = 0; i < guarded.size(); ++i)
    stacked.middleRows(enc.segments[i].offset, enc.segments[i].length) = guarded[i];
  enc.answers = tape.constant(std::move(stacked));
  enc.answers_on_query = attn_seq(enc.answers, enc.question, tape.parameter(*attn_answer_query_));
  return enc;
}

template <typename T>
Var<T> TriAttentionScorer<T>::score_column(Tape<T>& tape, const Encoded& enc, const Matrix<T>& context_in,
                                           bool train, Rng* rng) const {
  Var<T> context = tape.constant(guard(context_in, config_.embed_dim));
  Var<T> context_on_query = attn_seq(context, enc.question, tape.parameter(*attn_context_query_));
  const Var<T> context_parts[] = {context, context_on_query};
  Var<T> hc = bigru_encode<T>(concat<T>(context_parts, 1), gru_context_, {}, config_.dropout_rate, train, rng);
  Var<T> cvec = attn_seq(enc.question_vec, hc, tape.parameter(*attn_summary_query_));

  Var<T> answers_on_context = attn_seq(enc.answers, context, tape.parameter(*attn_answer_context_));
  const Var<T> answer_parts[] = {enc.answers, enc.answers_on_query, answers_on_context};
  Var<T> ha = bigru_encode<T>(concat<T>(answer_parts, 1), gru_answer_, enc.segments, config_.dropout_rate, train,
                              rng);
  Var<T> avec = segment_attention_pool(ha, matmul(ha, tape.parameter(*self_answer_)), enc.segments);

  Var<T> l_aq = matmul(avec, transpose(enc.question_vec));
  Var<T> l_ac = matmul(avec, transpose(cvec));
  const Var<T> feature_parts[] = {l_aq, l_ac};
  Var<T> x = concat<T>(feature_parts, 1);
  for (std::size_t l = 0; l < ffn_.size(); ++l) {
    x = add(matmul(x, tape.parameter(*ffn_[l].first)), tape.parameter(*ffn_[l].second));
    if (l + 1 < ffn_.size()) x = dropout(relu(x), config_.dropout_rate, train, rng);
  }
  return x;
}

template <typename T>
Var<T> TriAttentionScorer<T>::score_matrix(Tape<T>& tape, const Matrix<T>& question,
                                           std::span<const Matrix<T>> contexts,
                                           std::span<const Matrix<T>> candidates, bool train, Rng* rng) const {
  if (contexts.empty()) throw UsageError("score_matrix needs at least one context");
  const Encoded enc = encode_shared(tape, question, candidates, train, rng);
  std::vector<Var<T>> columns;
  columns.reserve(contexts.size());
  for (const auto& ctx : contexts) columns.push_back(score_column(tape, enc, ctx, train, rng));
  if (columns.size() == 1) return columns.front();
  return concat<T>(columns, 1);
}

template <typename T>
Var<T> TriAttentionScorer<T>::score_candidates(Tape<T>& tape, const Matrix<T>& question, const Matrix<T>& context,
                                               std::span<const Matrix<T>> candidates, bool train, Rng* rng) const {
  return score_matrix(tape, question, std::span<const Matrix<T>>(&context, 1), candidates, train, rng);
}

template <typename T>
Matrix<T> TriAttentionScorer<T>::scores(const Matrix<T>& question, std::span<const Matrix<T>> contexts,
                                        std::span<const Matrix<T>> candidates) const {
  Tape<T> tape;
  return score_matrix(tape, question, contexts, candidates, false, nullptr).value();
}

#define MCQA_INSTANTIATE(T)                                                                                   \
  template Matrix<T> glorot_uniform<T>(Eigen::Index, Eigen::Index, Rng&);                                     \
  template Var<T> attn_seq(Var<T>, Var<T>, Var<T>);                                                           \
  template Var<T> attn_self(Var<T>, Var<T>);                                                                  \
  template Var<T> bigru_encode(Var<T>, std::span<const BiGruLayer<T>>, std::span<const Segment>, double, bool, \
                               Rng*);                                                                         \
  template class TriAttentionScorer<T>;

MCQA_INSTANTIATE(float)
MCQA_INSTANTIATE(double)
MCQA_INSTANTIATE(long double)

#undef MCQA_INSTANTIATE

}  // namespace mcqa
