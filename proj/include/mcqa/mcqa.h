/* Copyright 2026 The mcqa Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the mcqa library. Every function returns an mcqa_status;
 * on failure mcqa_last_error() describes the problem (per thread). Strings
 * returned by the library stay valid until the next call on the same thread. */

#ifndef MCQA_MCQA_H_
#define MCQA_MCQA_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MCQA_BUILDING_LIBRARY)
#define MCQA_API __declspec(dllexport)
#else
#define MCQA_API __declspec(dllimport)
#endif
#else
#define MCQA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mcqa_status {
  MCQA_OK = 0,
  MCQA_ERR_CONFIG = 1,
  MCQA_ERR_USAGE = 2,
  MCQA_ERR_IO = 3,
  MCQA_ERR_PARSE = 4,
  MCQA_ERR_INTEGRITY = 5,
  MCQA_ERR_SHAPE = 6,
  MCQA_ERR_NUMERIC = 7,
  MCQA_ERR_WEIGHT_DOMAIN = 8,
  MCQA_ERR_INCOMPATIBLE = 9,
  MCQA_ERR_BUSY = 10,
  MCQA_ERR_INTERNAL = 11
} mcqa_status;

MCQA_API const char* mcqa_version(void);
MCQA_API const char* mcqa_status_name(mcqa_status status);
/* Message of the last failed call on this thread ("" if none). */
MCQA_API const char* mcqa_last_error(void);

/* ------------------------------------------------------------------------ */
/* Run configuration */

typedef struct mcqa_config mcqa_config;

MCQA_API mcqa_status mcqa_config_create(mcqa_config** out);
MCQA_API void mcqa_config_destroy(mcqa_config* config);
/* Applies every key of a key=value file on top of the current values. */
MCQA_API mcqa_status mcqa_config_load_file(mcqa_config* config, const char* path);
MCQA_API mcqa_status mcqa_config_set(mcqa_config* config, const char* key, const char* value);
/* Canonical value of one key. The pointer is owned by the library. */
MCQA_API mcqa_status mcqa_config_get(const mcqa_config* config, const char* key, const char** out);
/* Canonical text form. The pointer is owned by the library. */
MCQA_API mcqa_status mcqa_config_text(const mcqa_config* config, const char** out);

/* ------------------------------------------------------------------------ */
/* Synthetic data */

typedef struct mcqa_synth_options {
  uint64_t docs;
  uint64_t questions_per_doc;
  uint64_t sentences_per_summary;
  uint64_t tokens_per_sentence;
  uint64_t vocab_size;
  /* Width of the random embedding table written next to the splits. */
  uint64_t embed_dim;
  uint64_t seed;
} mcqa_synth_options;

MCQA_API void mcqa_synth_options_default(mcqa_synth_options* options);

/* Writes train.jsonl, valid.jsonl, test.jsonl and embeddings.txt into
 * out_dir (created if needed). docs == 0 is a usage error. */
MCQA_API mcqa_status mcqa_generate_synthetic(const char* out_dir, const mcqa_synth_options* options);

/* ------------------------------------------------------------------------ */
/* Training and evaluation */

typedef void (*mcqa_epoch_callback)(void* user, uint64_t epoch, double train_loss, double valid_mrr);

/* Trains with `config` and writes <checkpoint_dir>/model.ckpt (best
 * validation epoch) and <checkpoint_dir>/train_log.jsonl. Holds
 * <checkpoint_dir>/.lock for the duration; MCQA_ERR_BUSY if it exists.
 * `best_valid_mrr` may be NULL; it receives NaN without a validation split. */
MCQA_API mcqa_status mcqa_train(const mcqa_config* config, mcqa_epoch_callback on_epoch, void* user,
                                double* best_valid_mrr);

/* Evaluates a checkpoint on `split` ("train", "valid", "test").
 * `config` may be NULL, in which case the configuration stored in the
 * checkpoint is used. `eval_context` may be NULL for the default regime.
 * The JSON report goes to `report_path`, or when that is NULL to
 * report_<split>_<context>.json in the report directory (the checkpoint's
 * directory if none is configured). */
MCQA_API mcqa_status mcqa_evaluate(const mcqa_config* config, const char* checkpoint_path, const char* split,
                                   const char* eval_context, const char* report_path, double* mrr);

/* Trains every configured grid row and writes the MRR table as CSV. */
MCQA_API mcqa_status mcqa_grid(const mcqa_config* config, const char* csv_path);

/* One JSON line per (question, selected chunk) of `split` under `context`
 * (question-only retrieval query). */
MCQA_API mcqa_status mcqa_dump_chunks(const mcqa_config* config, const char* split, const char* context,
                                      const char* out_path);

/* ------------------------------------------------------------------------ */
/* Heads on plain arrays */

/* `scores` is n x m row-major. `head` is "vanilla" (m must be 1), "gn" or
 * "wgn_static" (needs `tfidf`, m values). Writes n probabilities. */
MCQA_API mcqa_status mcqa_head_distribution(const char* head, const double* scores, size_t n, size_t m,
                                            const double* tfidf, double* probabilities);

#ifdef __cplusplus
}
#endif

#endif /* MCQA_MCQA_H_ */
