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

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace vdep {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Compute precision is 64-bit throughout; checkpoints narrow to float on disk.
using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

/// Dense row-major array with an optional gradient buffer.
///
/// Everything in this project is at most two-dimensional, so the storage is
/// an Eigen matrix; a scalar is 1x1 and a vector is 1xn.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix data, bool requires_grad = false)
      : data_(std::move(data)), requires_grad_(requires_grad) {}

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(Matrix::Zero(rows, cols), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m), requires_grad);
  }

  std::vector<Index> shape() const { return {data_.rows(), data_.cols()}; }
  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }
  Index size() const { return data_.size(); }

  const Matrix& data() const { return data_; }
  Matrix& data() { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  const Matrix& grad() const { return *grad_; }
  void accumulate_grad(const Matrix& g) {
    if (!grad_) {
      grad_ = g;
    } else {
      *grad_ += g;
    }
  }
  void zero_grad() { grad_.reset(); }

  bool all_finite() const { return data_.allFinite(); }

 private:
  Matrix data_;
  bool requires_grad_ = false;
  std::optional<Matrix> grad_;
};

}  // namespace vdep
