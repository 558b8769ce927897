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

#include "mcqa/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mcqa/error.hpp"

namespace mcqa {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  return "bad value '" + std::string(value) + "' for " + std::string(key) + " (expected " + std::string(expected) +
         ")";
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  std::uint64_t x = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, x);
  if (value.empty() || ec != std::errc() || ptr != end) throw ConfigError(bad_value(key, value, "an integer >= 0"));
  return x;
}

std::size_t to_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(std::string_view key, std::string_view value) {
  double x = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, x);
  if (value.empty() || ec != std::errc() || ptr != end) throw ConfigError(bad_value(key, value, "a number"));
  return x;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(bad_value(key, value, "true|false"));
}

std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

template <typename F>
void for_each_item(std::string_view text, F&& f) {
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) f(item);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
}

}  // namespace

std::vector<GridRow> parse_grid_rows(std::string_view text) {
  std::vector<GridRow> rows;
  for_each_item(text, [&](std::string_view item) {
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw ConfigError("grid row '" + std::string(item) + "' is not head:context");
    rows.push_back({parse_head(trim(item.substr(0, colon))), parse_context(trim(item.substr(colon + 1)))});
  });
  if (rows.empty()) throw ConfigError("grid_rows is empty");
  return rows;
}

std::vector<ContextRegime> parse_context_list(std::string_view text) {
  std::vector<ContextRegime> out;
  for_each_item(text, [&](std::string_view item) { out.push_back(parse_context(item)); });
  if (out.empty()) throw ConfigError("context list is empty");
  return out;
}

std::vector<std::string> RunConfig::keys() {
  return {"data_dir",         "embeddings",     "checkpoint_dir", "report_dir",    "embed_dim",
          "recurrent_hidden", "linear_hidden",  "gru_layers",     "ffn_layers",    "dropout",
          "attention_dim",    "precision",      "head",           "train_context", "eval_context",
          "mlp_hidden",       "stop_feature_grad", "learning_rate", "adam_beta1",  "adam_beta2",
          "adam_epsilon",     "max_epochs",     "patience",       "chunk_budget",  "seed",
          "grid_rows",        "grid_eval_contexts", "grid_split"};
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view value = trim(raw);
  if (key == "data_dir") {
    data_dir = std::string(value);
  } else if (key == "embeddings") {
    embeddings = std::string(value);
  } else if (key == "checkpoint_dir") {
    checkpoint_dir = std::string(value);
  } else if (key == "report_dir") {
    report_dir = std::string(value);
  } else if (key == "embed_dim") {
    model.embed_dim = to_size(key, value);
  } else if (key == "recurrent_hidden") {
    model.recurrent_hidden = to_size(key, value);
  } else if (key == "linear_hidden") {
    model.linear_hidden = to_size(key, value);
  } else if (key == "gru_layers") {
    model.gru_layers = to_size(key, value);
  } else if (key == "ffn_layers") {
    model.ffn_layers = to_size(key, value);
  } else if (key == "dropout") {
    model.dropout_rate = to_double(key, value);
  } else if (key == "attention_dim") {
    model.attention_dim = to_size(key, value);
  } else if (key == "precision") {
    if (value == "f32") {
      model.precision = Precision::f32;
    } else if (value == "f64") {
      model.precision = Precision::f64;
    } else {
      throw ConfigError(bad_value(key, value, "f32|f64"));
    }
  } else if (key == "head") {
    train.head = parse_head(value);
  } else if (key == "train_context") {
    train.train_context = parse_context(value);
  } else if (key == "eval_context") {
    if (value == "default") {
      eval_context.reset();
    } else {
      eval_context = parse_context(value);
    }
  } else if (key == "mlp_hidden") {
    train.mlp_hidden = to_size(key, value);
  } else if (key == "stop_feature_grad") {
    train.stop_feature_grad = to_bool(key, value);
  } else if (key == "learning_rate") {
    train.learning_rate = to_double(key, value);
  } else if (key == "adam_beta1") {
    train.beta1 = to_double(key, value);
  } else if (key == "adam_beta2") {
    train.beta2 = to_double(key, value);
  } else if (key == "adam_epsilon") {
    train.adam_epsilon = to_double(key, value);
  } else if (key == "max_epochs") {
    train.max_epochs = to_size(key, value);
  } else if (key == "patience") {
    train.patience = to_size(key, value);
  } else if (key == "chunk_budget") {
    chunk_budget = to_size(key, value);
  } else if (key == "seed") {
    model.seed = train.seed = to_u64(key, value);
  } else if (key == "grid_rows") {
    grid_rows = parse_grid_rows(value);
  } else if (key == "grid_eval_contexts") {
    grid_columns = parse_context_list(value);
  } else if (key == "grid_split") {
    try {
      grid_split = parse_split(value);
    } catch (const Error&) {
      throw ConfigError(bad_value(key, value, "train|valid|test"));
    }
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "data_dir = " << data_dir.string() << '\n';
  os << "embeddings = " << embeddings.string() << '\n';
  os << "checkpoint_dir = " << checkpoint_dir.string() << '\n';
  os << "report_dir = " << report_dir.string() << '\n';
  os << "embed_dim = " << model.embed_dim << '\n';
  os << "recurrent_hidden = " << model.recurrent_hidden << '\n';
  os << "linear_hidden = " << model.linear_hidden << '\n';
  os << "gru_layers = " << model.gru_layers << '\n';
  os << "ffn_layers = " << model.ffn_layers << '\n';
  os << "dropout = " << fmt(model.dropout_rate) << '\n';
  os << "attention_dim = " << model.attention_dim << '\n';
  os << "precision = " << (model.precision == Precision::f64 ? "f64" : "f32") << '\n';
  os << "head = " << to_string(train.head) << '\n';
  os << "train_context = " << to_string(train.train_context) << '\n';
  os << "eval_context = " << (eval_context ? to_string(*eval_context) : std::string("default")) << '\n';
  os << "mlp_hidden = " << train.mlp_hidden << '\n';
  os << "stop_feature_grad = " << (train.stop_feature_grad ? "true" : "false") << '\n';
  os << "learning_rate = " << fmt(train.learning_rate) << '\n';
  os << "adam_beta1 = " << fmt(train.beta1) << '\n';
  os << "adam_beta2 = " << fmt(train.beta2) << '\n';
  os << "adam_epsilon = " << fmt(train.adam_epsilon) << '\n';
  os << "max_epochs = " << train.max_epochs << '\n';
  os << "patience = " << train.patience << '\n';
  os << "chunk_budget = " << chunk_budget << '\n';
  os << "seed = " << train.seed << '\n';
  os << "grid_rows = ";
  for (std::size_t i = 0; i < grid_rows.size(); ++i)
    os << (i ? "," : "") << to_string(grid_rows[i].head) << ':' << to_string(grid_rows[i].train_context);
  os << '\n';
  os << "grid_eval_contexts = ";
  for (std::size_t i = 0; i < grid_columns.size(); ++i) os << (i ? "," : "") << to_string(grid_columns[i]);
  os << '\n';
  os << "grid_split = " << to_string(grid_split) << '\n';
  return os.str();
}

std::string RunConfig::get(std::string_view key) const {
  const std::string text = to_text();
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const std::string_view line = rest.substr(0, nl);
    const auto eq = line.find(" = ");
    if (eq != std::string_view::npos && line.substr(0, eq) == key) return std::string(line.substr(eq + 3));
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (model.seed != train.seed) throw ConfigError("model and training seeds differ");
  if (chunk_budget < 1) throw ConfigError("chunk_budget must be >= 1");
  if (grid_rows.empty() || grid_columns.empty()) throw ConfigError("grid needs rows and eval contexts");
}

ContextRegime RunConfig::resolved_eval_context() const {
  return effective_eval_context(train.train_context,
                                eval_context ? *eval_context : default_eval_context(train.head, train.train_context));
}

void apply_run_config(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("missing key", line_no);
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  apply_run_config(cfg, text);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void require_inputs(const RunConfig& config, bool need_embeddings) {
  namespace fs = std::filesystem;
  if (config.data_dir.empty()) throw ConfigError("data_dir is not set");
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const fs::path p = config.data_dir / (std::string(to_string(s)) + ".jsonl");
    if (!fs::is_regular_file(p)) throw IoError("missing dataset file '" + p.string() + "'");
  }
  if (need_embeddings) {
    if (config.embeddings.empty()) throw ConfigError("embeddings is not set");
    if (!fs::is_regular_file(config.embeddings))
      throw IoError("missing embeddings file '" + config.embeddings.string() + "'");
  }
}

}  // namespace mcqa
