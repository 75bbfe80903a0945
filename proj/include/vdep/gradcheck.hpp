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

#include "vdep/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vdep {

/// |a - n| / max(|a|, |n|, 1e-6). The floor sits above the round-off of a
/// 1e-5 central difference in double precision, so gradients that vanish up
/// to that resolution compare equal.
double gradcheck_relative_error(double analytic, double numeric);

using ScalarFunction = std::function<Var(Tape&, const Var&)>;

/// Central-difference check of a scalar-valued f at x. Every coordinate of x
/// is perturbed; returns the worst relative error.
double finite_diff_gradcheck(const ScalarFunction& f, const Tensor& x, double step = 1e-5);

struct NamedInput {
  std::string name;
  Tensor value;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_input;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

using MultiFunction = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Same check over several inputs at once. When max_coords_per_input > 0 and
/// an input is larger, that many coordinates are sampled with the given seed.
GradcheckReport gradcheck_inputs(const MultiFunction& f, const std::vector<NamedInput>& inputs,
                                 double step = 1e-5, std::size_t max_coords_per_input = 0,
                                 std::uint64_t seed = 0);

}  // namespace vdep
