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

#include "mcqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "mcqa/error.hpp"

namespace mcqa {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'C', 'Q', 'A', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint " + path.string());
  }

  template <typename V>
  V get() {
    V v{};
    bytes(&v, sizeof v);
    return v;
  }

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("truncated checkpoint " + path_.string(), 0);
  }

  std::string string(std::size_t n) {
    if (n > (std::size_t{1} << 32)) throw ParseError("implausible string length in checkpoint", 0);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

CheckpointHeader read_header(Reader& r) {
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("not a checkpoint file (bad magic)", 0);
  CheckpointHeader h;
  h.version = r.get<std::uint32_t>();
  if (h.version != kCheckpointVersion)
    throw IncompatibleError("checkpoint format version " + std::to_string(h.version) + " unsupported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  h.text = r.string(r.get<std::uint64_t>());
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& params, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  Reader r(path);
  CheckpointHeader h = read_header(r);
  if (r.get<std::uint64_t>() > 0) {
    r.string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) r.get<std::uint64_t>();
    h.precision = r.get<std::uint8_t>() == 8 ? Precision::f64 : Precision::f32;
  }
  return h;
}

template <typename T>
ParameterStore<T> load_checkpoint(const std::filesystem::path& path, std::string* text) {
  Reader r(path);
  CheckpointHeader h = read_header(r);
  if (text) *text = h.text;
  ParameterStore<T> store;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank < 1 || rank > 2) throw ParseError("tensor " + name + " has unsupported rank " + std::to_string(rank), 0);
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t k = 0; k < rank; ++k) dims[k] = r.get<std::uint64_t>();
    if (rank == 1) std::swap(dims[0], dims[1]);
    if (dims[0] > (1u << 30) || dims[1] > (1u << 30)) throw ParseError("implausible tensor shape for " + name, 0);
    const auto tag = r.get<std::uint8_t>();
    Matrix<T> m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    const auto n = static_cast<std::size_t>(m.size());
    if (tag == 4) {
      std::vector<float> buf(n);
      r.bytes(buf.data(), n * sizeof(float));
      for (std::size_t k = 0; k < n; ++k) m.data()[k] = static_cast<T>(buf[k]);
    } else if (tag == 8) {
      std::vector<double> buf(n);
      r.bytes(buf.data(), n * sizeof(double));
      for (std::size_t k = 0; k < n; ++k) m.data()[k] = static_cast<T>(buf[k]);
    } else {
      throw ParseError("tensor " + name + " has unknown precision tag " + std::to_string(tag), 0);
    }
    store.add(name, std::move(m));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after checkpoint payload", 0);
  return store;
}

template void save_checkpoint(const std::filesystem::path&, const ParameterStore<float>&, const std::string&);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<double>&, const std::string&);
template ParameterStore<float> load_checkpoint(const std::filesystem::path&, std::string*);
template ParameterStore<double> load_checkpoint(const std::filesystem::path&, std::string*);

}  // namespace mcqa
