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

#include "mcqa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mcqa/error.hpp"
#include "mcqa/rng.hpp"

namespace mcqa {

std::vector<Chunk> chunk_document(std::string_view doc_id, std::span<const std::vector<Token>> sentences,
                                  std::size_t budget) {
  std::vector<Chunk> chunks;
  Chunk current;
  auto flush = [&] {
    if (current.tokens.empty()) return;
    current.doc_id = std::string(doc_id);
    current.chunk_index = chunks.size();
    chunks.push_back(std::move(current));
    current = Chunk{};
  };
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sentence = sentences[s];
    if (sentence.empty()) continue;
    if (!current.tokens.empty() && current.tokens.size() + sentence.size() > budget) flush();
    if (current.tokens.empty()) current.first_sentence = s;
    current.tokens.insert(current.tokens.end(), sentence.begin(), sentence.end());
    ++current.sentence_count;
    if (current.tokens.size() >= budget) flush();
  }
  flush();
  return chunks;
}

TfidfModel TfidfModel::fit(std::span<const std::vector<Token>> documents) {
  if (documents.empty()) throw UsageError("cannot fit tf-idf on an empty corpus");
  TfidfModel model;
  model.num_docs_ = documents.size();
  std::vector<std::string_view> seen;
  for (const auto& doc : documents) {
    seen.assign(doc.begin(), doc.end());
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto t : seen) {
      auto it = model.df_.find(t);
      if (it == model.df_.end())
        model.df_.emplace(std::string(t), 1);
      else
        ++it->second;
    }
  }
  return model;
}

TfidfModel TfidfModel::fit(std::span<const Chunk> chunks) {
  std::vector<std::vector<Token>> docs;
  docs.reserve(chunks.size());
  for (const auto& c : chunks) docs.push_back(c.tokens);
  return fit(std::span<const std::vector<Token>>(docs));
}

std::size_t TfidfModel::df(std::string_view token) const {
  auto it = df_.find(token);
  return it == df_.end() ? 0 : it->second;
}

double TfidfModel::idf(std::string_view token) const {
  const double n = static_cast<double>(num_docs_);
  return std::log((1.0 + n) / (1.0 + static_cast<double>(df(token)))) + 1.0;
}

namespace {

std::map<std::string_view, double> weights(const TfidfModel& model, std::span<const Token> tokens) {
  std::map<std::string_view, double> w;
  for (const auto& t : tokens) w[t] += 1.0;
  for (auto& [t, v] : w) v *= model.idf(t);
  return w;
}

double norm(const std::map<std::string_view, double>& w) {
  double s = 0.0;
  for (const auto& [t, v] : w) s += v * v;
  return std::sqrt(s);
}

}  // namespace

double TfidfModel::similarity(std::span<const Token> text, std::span<const Token> query) const {
  const auto a = weights(*this, text);
  const auto b = weights(*this, query);
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [t, v] : b) {
    auto it = a.find(t);
    if (it != a.end()) dot += it->second * v;
  }
  return dot / (na * nb);
}

std::vector<double> score_chunks(const TfidfModel& model, std::span<const Chunk> chunks,
                                 std::span<const Token> query) {
  std::vector<double> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(model.similarity(c.tokens, query));
  return out;
}

void assign_scores(const TfidfModel& model, std::span<Chunk> chunks, std::span<const Token> query) {
  for (auto& c : chunks) c.tfidf_score = model.similarity(c.tokens, query);
}

SelectionMode parse_selection_mode(std::string_view name) {
  if (name == "top_k") return SelectionMode::top_k;
  if (name == "uniform_k") return SelectionMode::uniform_k;
  if (name == "full") return SelectionMode::full;
  if (name == "top_1") return SelectionMode::top_1;
  throw UsageError("unknown selection mode '" + std::string(name) + "'");
}

std::vector<std::size_t> select_chunk_indices(std::span<const double> scores, std::size_t k, SelectionMode mode,
                                              std::uint64_t seed) {
  if (k == 0) throw UsageError("chunk selection needs k >= 1");
  const std::size_t m = scores.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  if (mode == SelectionMode::top_1) k = 1;
  if (mode == SelectionMode::full || k >= m) return idx;
  if (mode == SelectionMode::uniform_k) {
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(m - i)]);
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<Chunk> select_chunks(std::span<const Chunk> chunks, std::size_t k, SelectionMode mode,
                                 std::uint64_t seed) {
  std::vector<double> scores;
  for (const auto& c : chunks) scores.push_back(c.tfidf_score);
  std::vector<Chunk> out;
  for (std::size_t i : select_chunk_indices(scores, k, mode, seed)) out.push_back(chunks[i]);
  return out;
}

std::string chunk_to_json(const Chunk& chunk, std::string_view qid) {
  nlohmann::ordered_json j;
  if (!qid.empty()) j["qid"] = qid;
  j["doc_id"] = chunk.doc_id;
  j["chunk_index"] = chunk.chunk_index;
  j["tokens"] = chunk.tokens;
  j["score"] = chunk.tfidf_score;
  return j.dump();
}

}  // namespace mcqa
