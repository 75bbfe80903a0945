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

#include "vdep/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vdep {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so inputs always
/// precede the ops that consume them. A tape supports exactly one backward
/// pass; build a fresh tape for every forward.
///
/// A Tape is confined to the thread that built it.
class Tape {
 public:
  // Receives the upstream gradient of the node and pushes contributions into
  // its parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Copies the tensor value; the gradient stays on the tape.
  Var leaf(const Tensor& t);
  // Like leaf, but backward() also accumulates into t's grad buffer.
  Var watch(Tensor& t);

  Var record(const char* op, Matrix value, std::span<const Var> parents, BackwardFn fn);

  void backward(const Var& loss);

  bool requires_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  // Gradient of the last backward loss w.r.t. v; zeros if v was unreachable.
  Matrix grad(const Var& v) const;

  void accumulate(const Var& parent, const Matrix& contribution);
  template <typename Expr>
  void accumulate_expr(const Var& parent, const Expr& contribution) {
    Node& n = nodes_[parent.id()];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = contribution;
    } else {
      n.grad += contribution;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows in
    bool needs_grad = false;
    BackwardFn backward;
    Tensor* sink = nullptr;
  };

  Var push(Node node);

  // deque keeps value references stable while the tape grows
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Every op checks that its output is finite and
// throws NumericError otherwise.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a (m x n) plus a 1 x n row broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var linear(const Var& x, const Var& weight, const Var& bias);

Var sum(const Var& a);
Var mean(const Var& a);

Var softmax_lastdim(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
// Elementwise 1 / (x + eps).
Var reciprocal(const Var& x, double eps);

Var embedding_lookup(const Var& table, std::span<const int> ids);
Var gather_rows(const Var& x, std::span<const Index> rows);
Var slice_rows(const Var& x, Index begin, Index count);
Var concat_rows(std::span<const Var> parts);

struct MaskedLoss {
  Var value;            // scalar mean over enabled positions
  std::size_t count = 0;  // number of enabled positions
};

/// Mean negative log-likelihood over rows whose mask is true.
/// Returns a constant 0 with count 0 when no row is enabled.
MaskedLoss cross_entropy_masked(const Var& logits, std::span<const int> targets,
                                const std::vector<bool>& mask);

/// Mean of squared differences over enabled rows times width.
MaskedLoss masked_mean_squared_error(const Var& pred, const Var& target,
                                     const std::vector<bool>& mask);

struct AttentionResult {
  Var out;
  std::vector<Matrix> weights;  // one row-stochastic T x T matrix per head
};

/// Fused multi-head scaled dot-product attention over already-projected
/// q, k, v (each T x d, heads laid out as contiguous column blocks).
AttentionResult multi_head_attention(const Var& q, const Var& k, const Var& v, int n_heads,
                                     bool causal);

}  // namespace vdep
