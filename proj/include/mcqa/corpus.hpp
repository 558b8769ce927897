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
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mcqa {

struct QuestionRecord {
  std::string qid;
  std::string question_text;
  std::string gold_answer_text;

  bool operator==(const QuestionRecord&) const = default;
};

/// A long context and the questions asked about it.
struct DocumentRecord {
  std::string doc_id;
  std::string summary_text;
  std::vector<QuestionRecord> questions;

  bool operator==(const DocumentRecord&) const = default;
};

enum class Split { train, valid, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Deduplication key for answers: ASCII case folding, runs of whitespace
/// collapsed to one space, leading and trailing whitespace removed.
std::string normalize_answer(std::string_view answer);

/// The answer candidates of one document: every gold answer of every
/// question, deduplicated, in order of first occurrence.
class CandidateSet {
 public:
  CandidateSet() = default;
  CandidateSet(std::string doc_id, std::vector<std::string> candidates,
               std::map<std::string, std::size_t> gold_by_qid);

  const std::string& doc_id() const noexcept { return doc_id_; }
  const std::vector<std::string>& candidates() const noexcept { return candidates_; }
  std::size_t size() const noexcept { return candidates_.size(); }

  /// Throws IntegrityError for an unknown qid.
  std::size_t gold_index_for(std::string_view qid) const;

 private:
  std::string doc_id_;
  std::vector<std::string> candidates_;
  std::map<std::string, std::size_t, std::less<>> gold_by_qid_;
};

/// Throws UsageError when the document has no questions.
CandidateSet build_candidate_set(const DocumentRecord& doc);

/// Parses one JSONL dataset file. Blank lines are skipped; line numbers in
/// errors count them.
std::vector<DocumentRecord> load_dataset(const std::filesystem::path& path);

/// Loads `<dir>/<split>.jsonl`.
std::vector<DocumentRecord> load_split(const std::filesystem::path& dir, Split split);

std::string serialize_document(const DocumentRecord& doc);
void save_dataset(const std::vector<DocumentRecord>& docs, const std::filesystem::path& path);

struct SyntheticConfig {
  std::size_t num_docs = 10;
  std::size_t questions_per_doc = 5;
  std::size_t sentences_per_summary = 50;
  std::size_t tokens_per_sentence = 8;
  std::size_t vocab_size = 2000;
  std::uint64_t seed = 0;

  /// Throws ConfigError if the vocabulary cannot supply distinct answers or
  /// the summary is too short to plant one sentence per question.
  void validate() const;
};

/// Desk-scale documents with one planted sentence per question. The planted
/// sentence contains the question's three key tokens and the three answer
/// tokens; every other sentence uses filler words only. Pure function of the
/// config.
std::vector<DocumentRecord> generate_synthetic(const SyntheticConfig& config);

/// Every token generate_synthetic can emit, in a fixed order.
std::vector<std::string> synthetic_vocabulary(const SyntheticConfig& config);

struct DatasetSplits {
  std::vector<DocumentRecord> train;
  std::vector<DocumentRecord> valid;
  std::vector<DocumentRecord> test;
};

/// Roughly 80/10/10 in document order; valid and test get at least one
/// document each once there are three or more.
DatasetSplits split_documents(std::vector<DocumentRecord> docs);

}  // namespace mcqa
