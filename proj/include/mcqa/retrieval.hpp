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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqa/text.hpp"

namespace mcqa {

inline constexpr std::size_t kDefaultChunkBudget = 40;

/// A run of whole sentences from one document.
struct Chunk {
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::vector<Token> tokens;
  double tfidf_score = 0.0;
  std::size_t first_sentence = 0;
  std::size_t sentence_count = 0;
};

/// Greedy packing: whole sentences are appended while the chunk stays within
/// `budget` tokens. A sentence longer than the budget becomes a chunk of its
/// own and is never split. Empty sentences are skipped.
std::vector<Chunk> chunk_document(std::string_view doc_id, std::span<const std::vector<Token>> sentences,
                                  std::size_t budget = kDefaultChunkBudget);

/// Raw-count tf, smoothed idf ln((1+N)/(1+df)) + 1, cosine similarity.
class TfidfModel {
 public:
  /// Throws UsageError on an empty corpus.
  static TfidfModel fit(std::span<const Chunk> chunks);
  static TfidfModel fit(std::span<const std::vector<Token>> documents);

  std::size_t num_docs() const noexcept { return num_docs_; }
  std::size_t df(std::string_view token) const;
  double idf(std::string_view token) const;
  const std::map<std::string, std::size_t, std::less<>>& vocabulary() const noexcept { return df_; }

  /// Cosine similarity of the tf-idf vectors; 0 when either is all-zero.
  double similarity(std::span<const Token> text, std::span<const Token> query) const;

 private:
  std::map<std::string, std::size_t, std::less<>> df_;
  std::size_t num_docs_ = 0;
};

std::vector<double> score_chunks(const TfidfModel& model, std::span<const Chunk> chunks,
                                 std::span<const Token> query);

/// Same, storing the result in each chunk's tfidf_score.
void assign_scores(const TfidfModel& model, std::span<Chunk> chunks, std::span<const Token> query);

enum class SelectionMode { top_k, uniform_k, full, top_1 };

SelectionMode parse_selection_mode(std::string_view name);

/// Indices of the selected chunks in document order. top_k ranks by score with
/// ties going to the earlier chunk; uniform_k samples without replacement from
/// `seed`. k is clamped to the chunk count. Throws UsageError for k = 0.
std::vector<std::size_t> select_chunk_indices(std::span<const double> scores, std::size_t k, SelectionMode mode,
                                              std::uint64_t seed);

std::vector<Chunk> select_chunks(std::span<const Chunk> chunks, std::size_t k, SelectionMode mode,
                                 std::uint64_t seed);

/// {"doc_id", "chunk_index", "tokens", "score"} plus "qid" when non-empty.
std::string chunk_to_json(const Chunk& chunk, std::string_view qid = {});

}  // namespace mcqa
