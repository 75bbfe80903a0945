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

#include "vdep/config.hpp"

#include "vdep/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace vdep {

using nlohmann::json;

namespace {

// Strict reader for one section: every key must be consumed exactly once.
class SectionReader {
 public:
  SectionReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected object");
  }

  void integer(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "integer");
      out = v->get<int>();
    }
  }
  void size(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        fail(key, "non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        fail(key, "non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "boolean");
      out = v->get<bool>();
    }
  }
  template <typename Parse, typename T>
  void choice(const char* key, T& out, Parse parse, const char* allowed) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, std::string("string (one of ") + allowed + ")");
      auto parsed = parse(v->get<std::string>());
      if (!parsed) fail(key, std::string("one of ") + allowed);
      out = *parsed;
    }
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(section_ + "." + key + ": unknown key");
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const std::string& expected) const {
    throw ConfigError(section_ + "." + key + ": expected " + expected);
  }

  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},         {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},         {"vocab_size", c.vocab_size},
              {"image_side", c.image_side},   {"channels", c.channels},
              {"patch_size", c.patch_size},   {"max_seq_len", c.max_seq_len},
              {"projector_hidden", c.projector_hidden}, {"vision_layers", c.vision_layers}};
}

json to_json(const TrainConfig& c) {
  return json{{"alpha", c.alpha},
              {"data_ratio", c.data_ratio},
              {"loss_variant", std::string(to_string(c.loss_variant))},
              {"inverse_epsilon", c.inverse_epsilon},
              {"offset", c.offset},
              {"detach_target", c.detach_target},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"lr", c.lr},
              {"sft_lr", c.sft_lr},
              {"warmup_fraction", c.warmup_fraction},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"seed", c.seed},
              {"stage", std::string(to_string(c.stage))},
              {"half_split", c.half_split}};
}

json to_json(const DatasetSpec& c) {
  return json{{"size", c.size},
              {"master_seed", c.master_seed},
              {"image_side", c.image_side},
              {"channels", c.channels},
              {"noise", c.noise}};
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)}, {"train", to_json(c.train)}, {"data", to_json(c.data)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  SectionReader r(j, "model");
  r.integer("d_model", c.d_model);
  r.integer("n_layers", c.n_layers);
  r.integer("n_heads", c.n_heads);
  r.integer("vocab_size", c.vocab_size);
  r.integer("image_side", c.image_side);
  r.integer("channels", c.channels);
  r.integer("patch_size", c.patch_size);
  r.integer("max_seq_len", c.max_seq_len);
  r.integer("projector_hidden", c.projector_hidden);
  r.integer("vision_layers", c.vision_layers);
  r.finish();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  SectionReader r(j, "train");
  r.number("alpha", c.alpha);
  r.number("data_ratio", c.data_ratio);
  r.choice("loss_variant", c.loss_variant, parse_loss_variant, "l2, inverse_l2, sigmoid_l2");
  r.number("inverse_epsilon", c.inverse_epsilon);
  r.integer("offset", c.offset);
  r.boolean("detach_target", c.detach_target);
  r.size("batch_size", c.batch_size);
  r.size("steps", c.steps);
  r.number("lr", c.lr);
  r.number("sft_lr", c.sft_lr);
  r.number("warmup_fraction", c.warmup_fraction);
  r.number("weight_decay", c.weight_decay);
  r.number("grad_clip", c.grad_clip);
  r.u64("seed", c.seed);
  r.choice("stage", c.stage, parse_stage, "pretrain, sft");
  r.boolean("half_split", c.half_split);
  r.finish();
  return c;
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec c;
  SectionReader r(j, "data");
  r.size("size", c.size);
  r.u64("master_seed", c.master_seed);
  r.integer("image_side", c.image_side);
  r.integer("channels", c.channels);
  r.number("noise", c.noise);
  r.finish();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object with model/train/data");
  for (const auto& [key, _] : j.items()) {
    if (key != "model" && key != "train" && key != "data") {
      throw ConfigError(key + ": unknown section (expected model, train, data)");
    }
  }
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("data")) c.data = dataset_spec_from_json(j.at("data"));
  c.validate();
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  vdep::validate(data);
  if (model.vocab_size != static_cast<int>(Vocabulary::standard().size())) {
    throw ConfigError("model.vocab_size: must equal the vocabulary size " +
                      std::to_string(Vocabulary::standard().size()));
  }
  if (data.image_side != model.image_side) {
    throw ConfigError("data.image_side: must equal model.image_side");
  }
  if (data.channels != model.channels) throw ConfigError("data.channels: must equal model.channels");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> diff_against_defaults(const ModelConfig& model, const TrainConfig& train) {
  std::vector<std::string> lines;
  auto diff = [&](const char* section, const json& actual, const json& defaults) {
    for (const auto& [key, value] : actual.items()) {
      if (defaults.at(key) != value) {
        lines.push_back(std::string(section) + "." + key + ": " + value.dump() + " (default " +
                        defaults.at(key).dump() + ")");
      }
    }
  };
  diff("model", to_json(model), to_json(ModelConfig{}));
  diff("train", to_json(train), to_json(TrainConfig{}));
  return lines;
}

}  // namespace vdep
