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

#include "mcqa/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mcqa/error.hpp"
#include "mcqa/rng.hpp"

namespace mcqa {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::valid:
      return "valid";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw UsageError("unknown split '" + std::string(name) + "' (expected train|valid|test)");
}

std::string normalize_answer(std::string_view answer) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : answer) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
  }
  return out;
}

CandidateSet::CandidateSet(std::string doc_id, std::vector<std::string> candidates,
                           std::map<std::string, std::size_t> gold_by_qid)
    : doc_id_(std::move(doc_id)), candidates_(std::move(candidates)) {
  for (auto& [qid, idx] : gold_by_qid) {
    if (idx >= candidates_.size())
      throw IntegrityError("gold index for " + qid + " out of range in " + doc_id_);
    gold_by_qid_.emplace(qid, idx);
  }
}

std::size_t CandidateSet::gold_index_for(std::string_view qid) const {
  auto it = gold_by_qid_.find(qid);
  if (it == gold_by_qid_.end())
    throw IntegrityError("question '" + std::string(qid) + "' has no gold answer in " + doc_id_);
  return it->second;
}

CandidateSet build_candidate_set(const DocumentRecord& doc) {
  if (doc.questions.empty()) throw UsageError("document " + doc.doc_id + " has no questions");
  std::vector<std::string> candidates;
  std::map<std::string, std::size_t> key_to_index;
  std::map<std::string, std::size_t> gold;
  for (const auto& q : doc.questions) {
    const std::string key = normalize_answer(q.gold_answer_text);
    if (key.empty()) throw IntegrityError("question " + q.qid + " in " + doc.doc_id + " has an empty answer");
    auto [it, inserted] = key_to_index.emplace(key, candidates.size());
    if (inserted) candidates.push_back(q.gold_answer_text);
    gold[q.qid] = it->second;
  }
  return CandidateSet(doc.doc_id, std::move(candidates), std::move(gold));
}

namespace {

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing \"") + key + "\" key", line);
  if (!it->is_string()) throw ParseError(std::string("\"") + key + "\" must be a string", line);
  return it->get<std::string>();
}

DocumentRecord parse_document(const std::string& text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line);
  }
  if (!obj.is_object()) throw ParseError("expected a JSON object", line);
  DocumentRecord doc;
  doc.doc_id = require_string(obj, "doc_id", line);
  doc.summary_text = require_string(obj, "summary", line);
  if (doc.summary_text.empty()) throw ParseError("empty summary", line);
  auto qs = obj.find("questions");
  if (qs == obj.end()) throw ParseError("missing \"questions\" key", line);
  if (!qs->is_array()) throw ParseError("\"questions\" must be an array", line);
  std::set<std::string> qids;
  for (const auto& q : *qs) {
    if (!q.is_object()) throw ParseError("question entries must be objects", line);
    QuestionRecord rec{require_string(q, "qid", line), require_string(q, "question", line),
                       require_string(q, "answer", line)};
    if (normalize_answer(rec.gold_answer_text).empty())
      throw ParseError("empty answer for question " + rec.qid, line);
    if (!qids.insert(rec.qid).second) throw IntegrityError("duplicate qid " + rec.qid + " in " + doc.doc_id);
    doc.questions.push_back(std::move(rec));
  }
  return doc;
}

}  // namespace

std::vector<DocumentRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::vector<DocumentRecord> docs;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    DocumentRecord doc = parse_document(line, line_no);
    if (!ids.insert(doc.doc_id).second)
      throw IntegrityError("duplicate doc_id " + doc.doc_id + " at line " + std::to_string(line_no));
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<DocumentRecord> load_split(const std::filesystem::path& dir, Split split) {
  return load_dataset(dir / (std::string(to_string(split)) + ".jsonl"));
}

std::string serialize_document(const DocumentRecord& doc) {
  json qs = json::array();
  for (const auto& q : doc.questions)
    qs.push_back(json{{"qid", q.qid}, {"question", q.question_text}, {"answer", q.gold_answer_text}});
  // nlohmann sorts object keys, so the output is canonical.
  return json{{"doc_id", doc.doc_id}, {"summary", doc.summary_text}, {"questions", std::move(qs)}}.dump();
}

void save_dataset(const std::vector<DocumentRecord>& docs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : docs) out << serialize_document(d) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

constexpr std::size_t kKeyTokens = 3;
constexpr std::size_t kAnswerTokens = 3;
constexpr std::array<const char*, 4> kQuestionWords = {"what", "who", "which", "where"};

std::size_t filler_count(const SyntheticConfig& c) { return std::max<std::size_t>(1, c.vocab_size / 2); }

std::string filler_token(std::size_t i) { return "f" + std::to_string(i); }
std::string content_token(std::size_t i) { return "c" + std::to_string(i); }

}  // namespace

void SyntheticConfig::validate() const {
  if (questions_per_doc < 1 || sentences_per_summary < 1 || tokens_per_sentence < 1 || vocab_size < 2)
    throw ConfigError("synthetic config counts must be >= 1 (vocab_size >= 2)");
  const std::size_t content = vocab_size - filler_count(*this);
  const std::size_t needed = (kKeyTokens + kAnswerTokens) * questions_per_doc;
  if (content < needed)
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " too small: " + std::to_string(needed) +
                      " content tokens needed for distinct answers, " + std::to_string(content) + " available");
  if (sentences_per_summary < questions_per_doc)
    throw ConfigError("sentences_per_summary must be >= questions_per_doc");
}

std::vector<std::string> synthetic_vocabulary(const SyntheticConfig& config) {
  std::vector<std::string> vocab;
  const std::size_t fillers = filler_count(config);
  for (std::size_t i = 0; i < fillers; ++i) vocab.push_back(filler_token(i));
  for (std::size_t i = 0; i + fillers < config.vocab_size; ++i) vocab.push_back(content_token(i));
  for (const char* w : kQuestionWords) vocab.emplace_back(w);
  vocab.emplace_back(".");
  vocab.emplace_back("?");
  return vocab;
}

std::vector<DocumentRecord> generate_synthetic(const SyntheticConfig& config) {
  if (config.num_docs == 0) return {};
  config.validate();
  const std::size_t fillers = filler_count(config);
  const std::size_t content = config.vocab_size - fillers;
  const std::size_t q_count = config.questions_per_doc;
  Rng rng(config.seed);

  std::vector<std::size_t> pool(content);
  std::vector<std::size_t> sentence_ids(config.sentences_per_summary);
  std::vector<DocumentRecord> docs;
  docs.reserve(config.num_docs);
  for (std::size_t d = 0; d < config.num_docs; ++d) {
    DocumentRecord doc;
    {
      std::ostringstream id;
      id << "doc" << d;
      doc.doc_id = id.str();
    }
    // Partial Fisher-Yates: distinct content tokens for every key/answer slot.
    for (std::size_t i = 0; i < content; ++i) pool[i] = i;
    const std::size_t need = (kKeyTokens + kAnswerTokens) * q_count;
    for (std::size_t i = 0; i < need; ++i) std::swap(pool[i], pool[i + rng.below(content - i)]);
    for (std::size_t i = 0; i < sentence_ids.size(); ++i) sentence_ids[i] = i;
    for (std::size_t i = 0; i < q_count; ++i)
      std::swap(sentence_ids[i], sentence_ids[i + rng.below(sentence_ids.size() - i)]);

    std::vector<std::vector<std::string>> sentences(config.sentences_per_summary);
    for (auto& s : sentences)
      for (std::size_t t = 0; t < config.tokens_per_sentence; ++t) s.push_back(filler_token(rng.below(fillers)));

    for (std::size_t q = 0; q < q_count; ++q) {
      const std::size_t base = q * (kKeyTokens + kAnswerTokens);
      std::vector<std::string> keys, answer;
      for (std::size_t k = 0; k < kKeyTokens; ++k) keys.push_back(content_token(pool[base + k]));
      for (std::size_t k = 0; k < kAnswerTokens; ++k) answer.push_back(content_token(pool[base + kKeyTokens + k]));

      // The planted block replaces filler words at a random offset; short
      // sentences grow to fit it.
      auto& s = sentences[sentence_ids[q]];
      const std::size_t block = kKeyTokens + kAnswerTokens;
      if (s.size() < block) s.resize(block);
      const std::size_t offset = rng.below(s.size() - block + 1);
      for (std::size_t k = 0; k < kKeyTokens; ++k) s[offset + k] = keys[k];
      for (std::size_t k = 0; k < kAnswerTokens; ++k) s[offset + kKeyTokens + k] = answer[k];

      QuestionRecord rec;
      rec.qid = doc.doc_id + "-q" + std::to_string(q);
      rec.question_text = kQuestionWords[rng.below(kQuestionWords.size())];
      for (const auto& k : keys) rec.question_text += " " + k;
      rec.question_text += " ?";
      for (const auto& a : answer) rec.gold_answer_text += (rec.gold_answer_text.empty() ? "" : " ") + a;
      doc.questions.push_back(std::move(rec));
    }

    for (const auto& s : sentences) {
      for (const auto& t : s) doc.summary_text += t + " ";
      doc.summary_text += ". ";
    }
    doc.summary_text.pop_back();
    docs.push_back(std::move(doc));
  }
  return docs;
}

DatasetSplits split_documents(std::vector<DocumentRecord> docs) {
  const std::size_t n = docs.size();
  std::size_t held = n >= 3 ? std::max<std::size_t>(1, n / 10) : 0;
  DatasetSplits out;
  std::size_t n_train = n - 2 * held;
  std::size_t n_valid = held;
  if (n == 2) {
    n_train = 1;
    n_valid = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train)
      out.train.push_back(std::move(docs[i]));
    else if (i < n_train + n_valid)
      out.valid.push_back(std::move(docs[i]));
    else
      out.test.push_back(std::move(docs[i]));
  }
  return out;
}

}  // namespace mcqa
