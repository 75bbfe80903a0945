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

#include "vdep/model.hpp"
#include "vdep/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vdep {

// Layout:
//   "VDEPCKPT" | u32 LE version | u64 LE header length | JSON header | f32 LE blobs
// The header holds the model and train configs and a tensor index (name,
// shape, byte offset into the blob section) sorted by name.
inline constexpr char kCheckpointMagic[8] = {'V', 'D', 'E', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  Parameters params;
};

std::vector<std::uint8_t> encode_checkpoint(const Parameters& params, const ModelConfig& model,
                                            const TrainConfig& train);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Parameters& params, const ModelConfig& model, const TrainConfig& train,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also checks the stored model config against `expected`, field by field.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::string checkpoint_header_json(const std::filesystem::path& path);

}  // namespace vdep
