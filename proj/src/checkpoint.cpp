/*
 * Copyright 2026 The vdep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "vdep/checkpoint.hpp"

#include "vdep/config.hpp"
#include "vdep/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vdep {

using nlohmann::json;

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[at + i]) << (8 * i);
  return v;
}

constexpr std::size_t kPreamble = sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);

struct Parsed {
  json header;
  std::size_t blob_start = 0;
};

Parsed parse_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic (expected VDEPCKPT)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 12);
  if (header_len > bytes.size() - kPreamble) throw FormatError("checkpoint: truncated header");
  Parsed p;
  try {
    p.header = json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + header_len);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  p.blob_start = kPreamble + header_len;
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Parameters& params, const ModelConfig& model,
                                            const TrainConfig& train) {
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    index.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
  }
  const json header = {{"model", to_json(model)}, {"train", to_json(train)}, {"tensors", index}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + text.size() + offset);
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [_, t] : params) {
    for (Index i = 0; i < t.size(); ++i) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.data().data()[i])));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const Parsed p = parse_header(bytes);
  Checkpoint ck;
  try {
    ck.model = model_config_from_json(p.header.at("model"));
    ck.train = train_config_from_json(p.header.at("train"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: header missing configs: ") + e.what());
  }
  if (!p.header.contains("tensors") || !p.header.at("tensors").is_array()) {
    throw FormatError("checkpoint: header has no tensor index");
  }
  for (const auto& entry : p.header.at("tensors")) {
    std::string name;
    Index rows = 0, cols = 0;
    std::uint64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      rows = entry.at("shape").at(0).get<Index>();
      cols = entry.at("shape").at(1).get<Index>();
      offset = entry.at("offset").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("checkpoint: bad tensor index entry: ") + e.what());
    }
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
    const std::uint64_t begin = p.blob_start + offset;
    if (rows < 0 || cols < 0 || begin + n * sizeof(float) > bytes.size()) {
      throw FormatError("checkpoint: tensor '" + name + "' exceeds file");
    }
    Matrix m(rows, cols);
    for (std::uint64_t i = 0; i < n; ++i) {
      m.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, begin + i * sizeof(float)));
    }
    ck.params.emplace(name, Tensor(std::move(m), true));
  }

  // Shapes must agree with what the stored config would build.
  const Parameters reference = init_parameters(ck.model, 0);
  for (const auto& [name, t] : reference) {
    auto it = ck.params.find(name);
    if (it == ck.params.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
      throw FormatError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
  }
  if (ck.params.size() != reference.size()) throw FormatError("checkpoint: unexpected extra tensors");
  return ck;
}

void save_checkpoint(const Parameters& params, const ModelConfig& model, const TrainConfig& train,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params, model, train);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const json have = to_json(ck.model);
  const json want = to_json(expected);
  for (const auto& [key, value] : want.items()) {
    if (have.at(key) != value) {
      throw ConfigError("model." + key + ": checkpoint has " + have.at(key).dump() + ", config has " +
                        value.dump());
    }
  }
  return ck;
}

std::string checkpoint_header_json(const std::filesystem::path& path) {
  return parse_header(read_bytes(path)).header.dump(2);
}

}  // namespace vdep
