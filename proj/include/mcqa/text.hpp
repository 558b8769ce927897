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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcqa/tensor.hpp"

namespace mcqa {

/// A case-folded surface form. Never empty, never contains whitespace.
using Token = std::string;

/// Lowercases ASCII letters, splits on whitespace and emits every ASCII
/// punctuation character as its own token.
std::vector<Token> tokenize(std::string_view text);

/// Splits after '.', '?' or '!' when followed by whitespace or end of input.
/// Abbreviations are not special-cased ("Mr. Smith" yields two sentences).
std::vector<std::string> split_sentences(std::string_view text);

/// Frozen word vectors. Read-only once built.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(std::string_view token) const;

  /// Pointer to `dimension()` floats, or nullptr for unknown tokens.
  const float* find(std::string_view token) const;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// Returns false (and records a warning) if the token is already present.
  bool insert(std::string token, std::span<const float> vector);

 private:
  std::size_t dimension_;
  std::vector<std::string> tokens_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> warnings_;
};

/// Reads the whitespace separated "token v1 ... vd" text format.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dimension);

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

/// Gaussian vectors with per-coordinate variance 1, one per token, in token
/// order. Used for desk-scale data where no pretrained vectors exist.
EmbeddingTable random_embeddings(std::span<const std::string> vocabulary, std::size_t dimension,
                                 std::uint64_t seed);

/// One row per token; unknown tokens map to zeros.
template <typename T>
Matrix<T> embed(std::span<const Token> tokens, const EmbeddingTable& table) {
  Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(tokens.size()),
                                  static_cast<Eigen::Index>(table.dimension()));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (const float* v = table.find(tokens[i])) {
      for (std::size_t k = 0; k < table.dimension(); ++k)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<T>(v[k]);
    }
  }
  return out;
}

}  // namespace mcqa
