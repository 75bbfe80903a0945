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

#include "vdep/gradcheck.hpp"
#include "vdep/model.hpp"
#include "vdep/objective.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vdep {

struct GradcheckCase {
  std::string name;
  std::uint64_t seed = 0;
  GradcheckReport report;
};

/// Every differentiable op on random inputs, reduced to a scalar through a
/// random weighting so no gradient is structurally zero.
std::vector<GradcheckCase> op_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed = 0,
                                              double step = 1e-5);

/// d=16, 2 layers, 2 heads, 8x8 images in 4x4 patches.
ModelConfig small_gradcheck_model();

struct HybridGradcheckOptions {
  ModelConfig model = small_gradcheck_model();
  double init_std = 0.3;
  double alpha = 1.0;
  std::size_t coords_per_tensor = 2;
  double step = 1e-5;
};

/// End-to-end hybrid loss over a two-sample batch (one sample per mode), for
/// each loss variant and offset. Targets are live for the finite-difference
/// check; a "frozen" case compares the detached gradient with the gradient
/// of the same loss against constant copies of the targets.
std::vector<GradcheckCase> hybrid_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed = 0,
                                                  const HybridGradcheckOptions& opts = {});

double worst_error(const std::vector<GradcheckCase>& cases);

}  // namespace vdep
