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

// Forward-only numerical kernels. These work on any Eigen dense expression and
// are shared by the autodiff ops, the diagnostics, and the tests.

#include "vdep/tensor.hpp"

#include <cmath>
#include <numbers>

namespace vdep::kernels {

/// Row-wise softmax with max subtraction.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Row-wise log-softmax.
template <typename Derived>
MatrixX<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mx = x.row(r).maxCoeff();
    const Scalar lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    out.row(r) = (x.row(r).array() - lse).matrix();
  }
  return out;
}

/// Causal variant: row i only sees columns 0..i. Masked entries are exactly 0
/// and never read, so values there cannot leak into earlier rows.
template <typename Derived>
MatrixX<typename Derived::Scalar> causal_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Index width = std::min<Index>(r + 1, x.cols());
    auto visible = x.row(r).head(width);
    const Scalar mx = visible.maxCoeff();
    out.row(r).head(width) = (visible.array() - mx).exp().matrix();
    out.row(r).head(width) /= out.row(r).head(width).sum();
  }
  return out;
}

template <typename Scalar>
Scalar gelu_tanh(Scalar x) {
  const Scalar c = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_tanh_derivative(Scalar x) {
  const Scalar c = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  const Scalar t = std::tanh(c * (x + Scalar(0.044715) * x * x * x));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * x * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3) * Scalar(0.044715) * x * x);
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// Per-row normalization statistics used by layer norm forward and backward.
template <typename Scalar>
struct RowNormStats {
  MatrixX<Scalar> normalized;  // (x - mean) * inv_std
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

template <typename Derived>
RowNormStats<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x,
                                                     typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  RowNormStats<Scalar> s;
  s.normalized.resize(x.rows(), x.cols());
  s.inv_std.resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().mean();
    s.inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    s.normalized.row(r) = (centered * s.inv_std(r)).matrix();
  }
  return s;
}

}  // namespace vdep::kernels
