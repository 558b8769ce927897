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
#include <string>

#include "mcqa/autodiff.hpp"

namespace mcqa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container, little endian:
///   "MCQACKPT" | u32 version | u64 text length | text (UTF-8 key=value block)
///   u64 tensor count, then per tensor:
///   u32 name length | name | u32 rank | u64 dims[rank] | u8 precision (4|8) | payload
/// Payload is row-major in the tagged precision.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& params, const std::string& text);

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::string text;
  Precision precision = Precision::f32;  // of the first tensor
};

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Loads every tensor, converting to T. Throws ParseError on a malformed file
/// and IncompatibleError on an unknown format version.
template <typename T>
ParameterStore<T> load_checkpoint(const std::filesystem::path& path, std::string* text = nullptr);

}  // namespace mcqa
