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

#pragma once

#include "vdep/data.hpp"
#include "vdep/model.hpp"
#include "vdep/trainer.hpp"

#include <json.hpp>

#include <filesystem>

namespace vdep {

/// The `model` / `train` / `data` sections of a run configuration file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DatasetSpec data;

  // Section-local checks plus cross-section agreement (image geometry,
  // vocabulary size).
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const DatasetSpec& c);
nlohmann::json to_json(const RunConfig& c);

// Missing keys keep their defaults; unknown keys and wrong types throw
// ConfigError naming "<section>.<key>" and the expected type.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

/// Fields of `c` that differ from the defaults, as "section.key: value" lines.
std::vector<std::string> diff_against_defaults(const ModelConfig& model, const TrainConfig& train);

}  // namespace vdep
