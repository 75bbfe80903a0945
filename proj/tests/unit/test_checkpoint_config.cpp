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

#include <doctest.h>
#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace vdep;
using nlohmann::json;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "vdep_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

ModelConfig tiny_model() {
  ModelConfig m;
  m.d_model = 8;
  m.n_layers = 1;
  m.n_heads = 2;
  m.projector_hidden = 16;
  return m;
}

}  // namespace

TEST_CASE("checkpoint bytes follow the documented layout") {
  const ModelConfig m = tiny_model();
  const Parameters p = init_parameters(m, 3);
  const auto bytes = encode_checkpoint(p, m, TrainConfig{});
  REQUIRE(bytes.size() > 20);
  CHECK(std::memcmp(bytes.data(), "VDEPCKPT", 8) == 0);
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= std::uint32_t(bytes[8 + i]) << (8 * i);
  CHECK(version == 1);
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= std::uint64_t(bytes[12 + i]) << (8 * i);
  const json header = json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<long>(hlen));
  CHECK(header.contains("model"));
  CHECK(header.contains("train"));
  const auto& tensors = header.at("tensors");
  REQUIRE(tensors.size() == p.size());

  std::string prev;
  std::uint64_t expected_offset = 0;
  const std::size_t blob = 20 + hlen;
  for (const auto& t : tensors) {
    const std::string name = t.at("name");
    CHECK(name > prev);
    prev = name;
    CHECK(t.at("offset").get<std::uint64_t>() == expected_offset);
    const Tensor& ref = p.at(name);
    CHECK(t.at("shape") == json::array({ref.rows(), ref.cols()}));
    float first;
    std::memcpy(&first, bytes.data() + blob + expected_offset, 4);  // host is little-endian
    CHECK(first == static_cast<float>(ref.data().data()[0]));
    expected_offset += static_cast<std::uint64_t>(ref.size()) * 4;
  }
  CHECK(bytes.size() == blob + expected_offset);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  const ModelConfig m = tiny_model();
  TrainConfig t;
  t.alpha = 0.01;
  t.loss_variant = LossVariant::SigmoidL2;
  const auto a = temp_path("a.vdck");
  const auto b = temp_path("b.vdck");
  save_checkpoint(init_parameters(m, 1), m, t, a);
  const Checkpoint c = load_checkpoint(a);
  CHECK(c.model == m);
  CHECK(c.train == t);
  save_checkpoint(c.params, c.model, c.train, b);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("corrupted or mismatched checkpoints are rejected") {
  const ModelConfig m = tiny_model();
  const auto path = temp_path("c.vdck");
  save_checkpoint(init_parameters(m, 1), m, TrainConfig{}, path);
  auto bytes = slurp(path);

  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(corrupt), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);

  ModelConfig other = m;
  other.d_model = 16;
  other.projector_hidden = 32;
  CHECK_THROWS_WITH_AS(load_checkpoint(path, other), doctest::Contains("model.d_model"), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("absent.vdck")), IoError);
}

TEST_CASE("run config: defaults, partial sections and round trip") {
  const RunConfig defaults = run_config_from_json(json::object());
  CHECK(defaults == RunConfig{});
  CHECK(defaults.train.alpha == 0.001);
  CHECK(defaults.train.data_ratio == 1.0);
  CHECK(defaults.train.loss_variant == LossVariant::L2);
  CHECK(defaults.train.offset == 1);
  CHECK(defaults.train.detach_target);
  CHECK(defaults.train.lr == 1e-3);
  CHECK(defaults.train.sft_lr == 2e-5);
  CHECK(defaults.train.warmup_fraction == 0.03);
  CHECK(defaults.data.noise == 0.05);

  const RunConfig c = run_config_from_json(json::parse(
      R"({"train": {"alpha": 0.1, "loss_variant": "1/L2", "steps": 10}, "data": {"size": 7}})"));
  CHECK(c.train.alpha == 0.1);
  CHECK(c.train.loss_variant == LossVariant::InverseL2);
  CHECK(c.data.size == 7);

  const auto path = temp_path("cfg.json");
  save_run_config(c, path);
  CHECK(load_run_config(path) == c);
}

TEST_CASE("run config errors name the key and the expected type") {
  auto err = [](const std::string& text) {
    try {
      run_config_from_json(json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(err(R"({"train": {"alhpa": 1}})").find("train.alhpa: unknown key") != std::string::npos);
  CHECK(err(R"({"model": {"d_model": "wide"}})").find("model.d_model: expected") != std::string::npos);
  CHECK(err(R"({"train": {"loss_variant": "l1"}})").find("train.loss_variant") != std::string::npos);
  CHECK(err(R"({"extra": {}})").find("extra") != std::string::npos);
  CHECK(err(R"({"train": {"data_ratio": 2.0}})").find("train.data_ratio") != std::string::npos);
  CHECK(err(R"({"model": {"image_side": 8}})").find("image_side") != std::string::npos);

  const auto path = temp_path("broken.json");
  write_text(path, "{ not json");
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
  CHECK_THROWS_AS(load_run_config(temp_path("nope.json")), IoError);
}

TEST_CASE("diff against defaults lists changed fields only") {
  TrainConfig t;
  t.alpha = 0.1;
  const auto d = diff_against_defaults(ModelConfig{}, t);
  REQUIRE(d.size() == 1);
  CHECK(d[0] == "train.alpha: 0.1 (default 0.001)");
  CHECK(diff_against_defaults(ModelConfig{}, TrainConfig{}).empty());
}
