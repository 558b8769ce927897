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

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcqa/corpus.hpp"
#include "mcqa/model.hpp"
#include "mcqa/train.hpp"

namespace mcqa {

/// Everything one command needs: model and training settings plus paths.
///
/// Text form is one `key = value` per line; `#` starts a comment. Unknown
/// keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path data_dir;
  std::filesystem::path embeddings;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path report_dir;
  std::size_t chunk_budget = kDefaultChunkBudget;
  /// Defaults to default_eval_context() when unset.
  std::optional<ContextRegime> eval_context;
  std::vector<GridRow> grid_rows = default_grid_rows();
  std::vector<ContextRegime> grid_columns = default_grid_columns();
  Split grid_split = Split::valid;

  /// Throws ConfigError for an unknown key or a malformed value.
  void set(std::string_view key, std::string_view value);

  /// Canonical text, readable by parse_run_config().
  std::string to_text() const;

  /// Canonical value of one key. Throws ConfigError for an unknown key.
  std::string get(std::string_view key) const;

  /// Model and training checks. Throws ConfigError.
  void validate() const;

  ContextRegime resolved_eval_context() const;

  /// Names of every accepted key, in canonical order.
  static std::vector<std::string> keys();
};

/// Throws ParseError (with the line) for a line that is not `key = value`,
/// ConfigError for an unknown key or bad value.
RunConfig parse_run_config(std::string_view text);
/// Same, applied on top of `config`; later keys win.
void apply_run_config(RunConfig& config, std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Grid rows are written `head:context` and separated by commas,
/// e.g. `gn:top_5,vanilla:full`.
std::vector<GridRow> parse_grid_rows(std::string_view text);
std::vector<ContextRegime> parse_context_list(std::string_view text);

/// Throws IoError naming the first missing input (data_dir split files,
/// embeddings) before any compute starts.
void require_inputs(const RunConfig& config, bool need_embeddings = true);

}  // namespace mcqa
