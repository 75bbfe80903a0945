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

#include "vdep/diagnostics.hpp"

#include <json.hpp>

namespace vdep {

struct EvalReport {
  std::size_t samples = 0;
  double exact_match = 0.0;
  double shape_accuracy = 0.0;
  double color_accuracy = 0.0;
  double row_accuracy = 0.0;
  double col_accuracy = 0.0;
  // Probe accuracy averaged over consecutive groups of `probe_group` samples.
  ProbeReport probe;
  double l_image = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Greedy caption accuracy plus the reconstruction probe. With the default
/// 16 patches, a group of 4 samples gives the 64-row probe batch.
EvalReport evaluate(const Parameters& params, std::span<const MultimodalSample> samples,
                    const ModelConfig& model, const ImageLossConfig& image_cfg,
                    std::size_t probe_group = 4);

/// Probe over consecutive groups of samples, averaged.
ProbeReport grouped_probe(const Parameters& params, std::span<const MultimodalSample> samples,
                          const ModelConfig& model, const ImageLossConfig& image_cfg,
                          std::size_t group);

}  // namespace vdep
