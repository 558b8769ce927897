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

#include "mcqa/mcqa.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "mcqa/checkpoint.hpp"
#include "mcqa/config.hpp"
#include "mcqa/error.hpp"
#include "mcqa/heads.hpp"
#include "mcqa/train.hpp"

struct mcqa_config {
  mcqa::RunConfig run;
};

namespace {

namespace fs = std::filesystem;
using namespace mcqa;

thread_local std::string g_last_error;
thread_local std::string g_text;

struct BusyError : Error {
  using Error::Error;
};

template <typename F>
mcqa_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return MCQA_OK;
  } catch (const ParseError& e) {
    g_last_error = e.what();
    return MCQA_ERR_PARSE;
  } catch (const IntegrityError& e) {
    g_last_error = e.what();
    return MCQA_ERR_INTEGRITY;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return MCQA_ERR_CONFIG;
  } catch (const UsageError& e) {
    g_last_error = e.what();
    return MCQA_ERR_USAGE;
  } catch (const ShapeError& e) {
    g_last_error = e.what();
    return MCQA_ERR_SHAPE;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return MCQA_ERR_IO;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return MCQA_ERR_NUMERIC;
  } catch (const WeightDomainError& e) {
    g_last_error = e.what();
    return MCQA_ERR_WEIGHT_DOMAIN;
  } catch (const IncompatibleError& e) {
    g_last_error = e.what();
    return MCQA_ERR_INCOMPATIBLE;
  } catch (const BusyError& e) {
    g_last_error = e.what();
    return MCQA_ERR_BUSY;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return MCQA_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MCQA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MCQA_ERR_INTERNAL;
  }
}

void require(bool cond, const char* what) {
  if (!cond) throw UsageError(what);
}

// Exclusive lock file; removed when the guard goes out of scope.
class LockFile {
 public:
  explicit LockFile(fs::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) throw BusyError("'" + path_.string() + "' exists: another command is using this directory");
      throw IoError("cannot create lock file '" + path_.string() + "': " + std::strerror(errno));
    }
  }
  ~LockFile() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out.flush()) throw IoError("failed writing '" + path.string() + "'");
}

DatasetSplits load_splits(const RunConfig& cfg) {
  DatasetSplits s;
  s.train = load_split(cfg.data_dir, Split::train);
  s.valid = load_split(cfg.data_dir, Split::valid);
  s.test = load_split(cfg.data_dir, Split::test);
  return s;
}

// Output locations are not part of what a checkpoint describes.
std::string checkpoint_text(RunConfig cfg) {
  cfg.checkpoint_dir.clear();
  cfg.report_dir.clear();
  return cfg.to_text();
}

template <typename T>
void check_compatible(const ParameterStore<T>& loaded, const RunConfig& cfg) {
  const ParameterStore<T> expected = init_parameters<T>(cfg.model, cfg.train);
  for (const auto& p : expected) {
    const auto* q = loaded.find(p.name);
    if (!q) throw IncompatibleError("checkpoint has no parameter '" + p.name + "'");
    if (q->value.rows() != p.value.rows() || q->value.cols() != p.value.cols())
      throw IncompatibleError("parameter '" + p.name + "' is " + std::to_string(q->value.rows()) + "x" +
                              std::to_string(q->value.cols()) + " in the checkpoint but the configuration needs " +
                              std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
  }
  if (loaded.size() != expected.size())
    throw IncompatibleError("checkpoint has " + std::to_string(loaded.size()) + " parameters, configuration needs " +
                            std::to_string(expected.size()));
}

template <typename T>
double run_training(const RunConfig& cfg, const Workspace& ws, mcqa_epoch_callback cb, void* user) {
  const fs::path log_path = cfg.checkpoint_dir / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write '" + log_path.string() + "'");
  auto outcome = train<T>(ws, init_parameters<T>(cfg.model, cfg.train), cfg.model, cfg.train, [&](const EpochLog& e) {
    log << e.to_json() << '\n';
    log.flush();
    if (cb) cb(user, e.epoch, e.train_loss, e.valid_mrr);
  });
  save_checkpoint(cfg.checkpoint_dir / "model.ckpt", outcome.best, checkpoint_text(cfg));
  return outcome.best_valid_mrr;
}

template <typename T>
PredictionReport run_eval(const RunConfig& cfg, const Workspace& ws, const fs::path& ckpt, Split split,
                          ContextRegime context) {
  ParameterStore<T> params = load_checkpoint<T>(ckpt);
  check_compatible(params, cfg);
  PredictionReport r = evaluate_mrr<T>(ws, ws.split(split), params, cfg.model, cfg.train.head, context);
  r.split = std::string(to_string(split));
  return r;
}

}  // namespace

extern "C" {

const char* mcqa_version(void) { return "0.1.0"; }

const char* mcqa_status_name(mcqa_status status) {
  switch (status) {
    case MCQA_OK:
      return "ok";
    case MCQA_ERR_CONFIG:
      return "config error";
    case MCQA_ERR_USAGE:
      return "usage error";
    case MCQA_ERR_IO:
      return "i/o error";
    case MCQA_ERR_PARSE:
      return "parse error";
    case MCQA_ERR_INTEGRITY:
      return "integrity error";
    case MCQA_ERR_SHAPE:
      return "shape error";
    case MCQA_ERR_NUMERIC:
      return "numeric error";
    case MCQA_ERR_WEIGHT_DOMAIN:
      return "weight domain error";
    case MCQA_ERR_INCOMPATIBLE:
      return "incompatible checkpoint";
    case MCQA_ERR_BUSY:
      return "busy";
    case MCQA_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* mcqa_last_error(void) { return g_last_error.c_str(); }

mcqa_status mcqa_config_create(mcqa_config** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = new mcqa_config();
  });
}

void mcqa_config_destroy(mcqa_config* config) { delete config; }

mcqa_status mcqa_config_load_file(mcqa_config* config, const char* path) {
  return guarded([&] {
    require(config && path, "null argument");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + std::string(path) + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // Apply to a copy so a bad file leaves the handle untouched.
    RunConfig merged = config->run;
    apply_run_config(merged, text);
    config->run = std::move(merged);
  });
}

mcqa_status mcqa_config_set(mcqa_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    config->run.set(key, value);
  });
}

mcqa_status mcqa_config_get(const mcqa_config* config, const char* key, const char** out) {
  return guarded([&] {
    require(config && key && out, "null argument");
    g_text = config->run.get(key);
    *out = g_text.c_str();
  });
}

mcqa_status mcqa_config_text(const mcqa_config* config, const char** out) {
  return guarded([&] {
    require(config && out, "null argument");
    g_text = config->run.to_text();
    *out = g_text.c_str();
  });
}

void mcqa_synth_options_default(mcqa_synth_options* options) {
  if (!options) return;
  const SyntheticConfig d;
  options->docs = d.num_docs;
  options->questions_per_doc = d.questions_per_doc;
  options->sentences_per_summary = d.sentences_per_summary;
  options->tokens_per_sentence = d.tokens_per_sentence;
  options->vocab_size = d.vocab_size;
  options->embed_dim = 300;
  options->seed = d.seed;
}

mcqa_status mcqa_generate_synthetic(const char* out_dir, const mcqa_synth_options* options) {
  return guarded([&] {
    require(out_dir && options, "null argument");
    if (options->docs == 0) throw UsageError("--docs must be >= 1");
    if (options->embed_dim == 0) throw UsageError("embedding dimension must be >= 1");
    SyntheticConfig sc;
    sc.num_docs = options->docs;
    sc.questions_per_doc = options->questions_per_doc;
    sc.sentences_per_summary = options->sentences_per_summary;
    sc.tokens_per_sentence = options->tokens_per_sentence;
    sc.vocab_size = options->vocab_size;
    sc.seed = options->seed;
    sc.validate();
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
    const DatasetSplits splits = split_documents(generate_synthetic(sc));
    save_dataset(splits.train, dir / "train.jsonl");
    save_dataset(splits.valid, dir / "valid.jsonl");
    save_dataset(splits.test, dir / "test.jsonl");
    const EmbeddingTable table =
        random_embeddings(synthetic_vocabulary(sc), options->embed_dim, Rng::derive(sc.seed, 0xE3B).next());
    save_embeddings(table, dir / "embeddings.txt");
  });
}

mcqa_status mcqa_train(const mcqa_config* config, mcqa_epoch_callback on_epoch, void* user,
                       double* best_valid_mrr) {
  return guarded([&] {
    {
      require(config != nullptr, "null config");
      const RunConfig& cfg = config->run;
      cfg.validate();
      require_inputs(cfg);
      if (cfg.checkpoint_dir.empty()) throw ConfigError("checkpoint_dir is not set");
      fs::create_directories(cfg.checkpoint_dir);
      LockFile lock(cfg.checkpoint_dir / ".lock");
      const EmbeddingTable table = load_embeddings(cfg.embeddings, cfg.model.embed_dim);
      const Workspace ws = make_workspace(table, load_splits(cfg), cfg.chunk_budget);
      const double best = cfg.model.precision == Precision::f64 ? run_training<double>(cfg, ws, on_epoch, user)
                                                                : run_training<float>(cfg, ws, on_epoch, user);
      if (best_valid_mrr) *best_valid_mrr = best;
    }
  });
}

mcqa_status mcqa_evaluate(const mcqa_config* config, const char* checkpoint_path, const char* split,
                          const char* eval_context, const char* report_path, double* mrr) {
  return guarded([&] {
    require(checkpoint_path && split, "null argument");
    const fs::path ckpt(checkpoint_path);
    if (!fs::is_regular_file(ckpt)) throw IoError("missing checkpoint '" + ckpt.string() + "'");
    const CheckpointHeader header = read_checkpoint_header(ckpt);
    RunConfig cfg = config ? config->run : parse_run_config(header.text);
    cfg.validate();
    if (eval_context) cfg.eval_context = parse_context(eval_context);
    const Split sp = parse_split(split);
    require_inputs(cfg);
    const ContextRegime context = cfg.resolved_eval_context();
    const EmbeddingTable table = load_embeddings(cfg.embeddings, cfg.model.embed_dim);
    const Workspace ws = make_workspace(table, load_splits(cfg), cfg.chunk_budget);
    const PredictionReport report = cfg.model.precision == Precision::f64
                                        ? run_eval<double>(cfg, ws, ckpt, sp, context)
                                        : run_eval<float>(cfg, ws, ckpt, sp, context);
    fs::path out;
    if (report_path) {
      out = report_path;
    } else {
      const fs::path dir = cfg.report_dir.empty() ? ckpt.parent_path() : cfg.report_dir;
      out = dir / ("report_" + std::string(split) + "_" + to_string(context) + ".json");
    }
    write_file(out, report.to_json());
    if (mrr) *mrr = report.mrr;
  });
}

mcqa_status mcqa_grid(const mcqa_config* config, const char* csv_path) {
  return guarded([&] {
    require(config && csv_path, "null argument");
    const RunConfig& cfg = config->run;
    cfg.validate();
    require_inputs(cfg);
    const EmbeddingTable table = load_embeddings(cfg.embeddings, cfg.model.embed_dim);
    const Workspace ws = make_workspace(table, load_splits(cfg), cfg.chunk_budget);
    const GridResult g = cfg.model.precision == Precision::f64
                             ? run_grid<double>(ws, cfg.grid_rows, cfg.grid_columns, cfg.model, cfg.train,
                                                cfg.grid_split)
                             : run_grid<float>(ws, cfg.grid_rows, cfg.grid_columns, cfg.model, cfg.train,
                                               cfg.grid_split);
    write_file(csv_path, g.to_csv());
  });
}

mcqa_status mcqa_dump_chunks(const mcqa_config* config, const char* split, const char* context,
                             const char* out_path) {
  return guarded([&] {
    require(config && split && context && out_path, "null argument");
    const RunConfig& cfg = config->run;
    require_inputs(cfg, false);
    const Split sp = parse_split(split);
    const ContextRegime regime = parse_context(context);
    const EmbeddingTable none(cfg.model.embed_dim);
    const Workspace ws = make_workspace(none, load_splits(cfg), cfg.chunk_budget);
    std::string lines;
    for (const auto& doc : ws.split(sp)) {
      for (const auto& q : doc.questions) {
        const QuestionContext ctx = build_context(doc, q, ws.tfidf, regime, HeadKind::gn, false, 0);
        std::vector<Token> query = q.question;
        for (std::size_t i : ctx.chunk_indices) {
          Chunk c = doc.chunks[i];
          c.tfidf_score = ws.tfidf.similarity(c.tokens, query);
          lines += chunk_to_json(c, q.qid);
          lines += '\n';
        }
      }
    }
    write_file(out_path, lines);
  });
}

mcqa_status mcqa_head_distribution(const char* head, const double* scores, size_t n, size_t m,
                                   const double* tfidf, double* probabilities) {
  return guarded([&] {
    require(head && scores && probabilities, "null argument");
    if (n == 0 || m == 0) throw ShapeError("score matrix must be non-empty");
    Matrix<double> s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < n * m; ++i) s.data()[i] = scores[i];
    CandidateDistribution d;
    switch (parse_head(head)) {
      case HeadKind::vanilla:
        d = vanilla_head(s);
        break;
      case HeadKind::gn:
        d = global_norm_head(s);
        break;
      case HeadKind::wgn_static: {
        require(tfidf != nullptr, "wgn_static needs tf-idf scores");
        const auto z = static_chunk_weights(std::span<const double>(tfidf, m));
        d = weighted_global_norm_head(s, z);
        break;
      }
      case HeadKind::wgn_mlp:
        throw UsageError("wgn_mlp needs trained weights; use a checkpoint");
    }
    for (std::size_t i = 0; i < n; ++i) probabilities[i] = d.p[i];
  });
}

}  // extern "C"
