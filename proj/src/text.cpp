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

#include "mcqa/text.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "mcqa/error.hpp"
#include "mcqa/rng.hpp"

namespace mcqa {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::size_t b = start;
    while (b < end && is_space(static_cast<unsigned char>(text[b]))) ++b;
    std::size_t e = end;
    while (e > b && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
    if (e > b) out.emplace_back(text.substr(b, e - b));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '?' && c != '!') continue;
    if (i + 1 == text.size() || is_space(static_cast<unsigned char>(text[i + 1]))) {
      emit(i + 1);
      start = i + 1;
    }
  }
  emit(text.size());
  return out;
}

bool EmbeddingTable::contains(std::string_view token) const { return find(token) != nullptr; }

const float* EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return nullptr;
  return data_.data() + it->second * dimension_;
}

bool EmbeddingTable::insert(std::string token, std::span<const float> vector) {
  if (vector.size() != dimension_)
    throw ShapeError("embedding for '" + token + "' has " + std::to_string(vector.size()) +
                     " values, expected " + std::to_string(dimension_));
  if (index_.count(token)) {
    warnings_.push_back("duplicate token '" + token + "' ignored");
    return false;
  }
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  data_.insert(data_.end(), vector.begin(), vector.end());
  return true;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dimension) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file " + path.string());
  EmbeddingTable table(dimension);
  std::string line;
  std::vector<float> values;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest(line);
    auto skip_space = [&] {
      while (!rest.empty() && is_space(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
    };
    auto next_field = [&]() -> std::string_view {
      skip_space();
      std::size_t n = 0;
      while (n < rest.size() && !is_space(static_cast<unsigned char>(rest[n]))) ++n;
      std::string_view f = rest.substr(0, n);
      rest.remove_prefix(n);
      return f;
    };
    const std::string_view token = next_field();
    if (token.empty()) continue;
    values.clear();
    for (std::string_view f = next_field(); !f.empty(); f = next_field()) {
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw ParseError("invalid float '" + std::string(f) + "'", line_no);
      values.push_back(v);
    }
    if (values.size() != dimension)
      throw ParseError("expected " + std::to_string(dimension) + " floats after '" + std::string(token) +
                           "', found " + std::to_string(values.size()),
                       line_no);
    table.insert(std::string(token), values);
  }
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embeddings file " + path.string());
  char buf[32];
  for (const auto& token : table.tokens()) {
    out << token;
    const float* v = table.find(token);
    for (std::size_t k = 0; k < table.dimension(); ++k) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v[k]);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

EmbeddingTable random_embeddings(std::span<const std::string> vocabulary, std::size_t dimension,
                                 std::uint64_t seed) {
  EmbeddingTable table(dimension);
  Rng rng(seed);
  std::vector<float> v(dimension);
  for (const auto& token : vocabulary) {
    for (auto& x : v) x = static_cast<float>(rng.normal());
    table.insert(token, v);
  }
  return table;
}

}  // namespace mcqa
