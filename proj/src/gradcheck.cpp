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

#include "vdep/gradcheck.hpp"

#include "vdep/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vdep {

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

double finite_diff_gradcheck(const ScalarFunction& f, const Tensor& x, double step) {
  std::vector<NamedInput> inputs{{"x", x}};
  auto report = gradcheck_inputs(
      [&f](Tape& t, const std::vector<Var>& vars) { return f(t, vars[0]); }, inputs, step);
  return report.max_rel_error;
}

namespace {

double evaluate(const MultiFunction& f, const std::vector<NamedInput>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(tape.constant(in.value.data()));
  Var out = f(tape, vars);
  return out.item();
}

}  // namespace

GradcheckReport gradcheck_inputs(const MultiFunction& f, const std::vector<NamedInput>& inputs,
                                 double step, std::size_t max_coords_per_input,
                                 std::uint64_t seed) {
  if (step <= 0.0) throw DomainError("gradcheck: step must be positive");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& in : inputs) {
      Tensor t(in.value.data(), true);
      vars.push_back(tape.leaf(t));
    }
    Var out = f(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  GradcheckReport report;
  std::mt19937_64 rng(seed);
  std::vector<NamedInput> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Index n = inputs[k].value.size();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (max_coords_per_input > 0 && coords.size() > max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (Index c : coords) {
      double& slot = probe[k].value.data().data()[c];
      const double original = slot;
      slot = original + step;
      const double up = evaluate(f, probe);
      slot = original - step;
      const double down = evaluate(f, probe);
      slot = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k].data()[c];
      const double err = gradcheck_relative_error(a, numeric);
      ++report.coordinates_checked;
      if (err > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) {
          report.worst_input = inputs[k].name;
          report.worst_index = c;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace vdep
