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

#include "vdep/autodiff.hpp"

#include "vdep/errors.hpp"
#include "vdep/kernels.hpp"

#include <cmath>
#include <string>

namespace vdep {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw TapeError("operands live on different tapes");
}

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("item() on non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  if (!value.allFinite()) throw NumericError("constant: non-finite value");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(const Tensor& t) {
  if (!t.all_finite()) throw NumericError("leaf: non-finite value");
  Node n;
  n.value = t.data();
  n.needs_grad = t.requires_grad();
  return push(std::move(n));
}

Var Tape::watch(Tensor& t) {
  Var v = leaf(t);
  if (t.requires_grad()) nodes_[v.id()].sink = &t;
  return v;
}

Var Tape::record(const char* op, Matrix value, std::span<const Var> parents, BackwardFn fn) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": non-finite output");
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw TapeError(std::string(op) + ": parent from another tape");
    n.needs_grad = n.needs_grad || nodes_[p.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Tape::accumulate(const Var& parent, const Matrix& contribution) {
  accumulate_expr(parent, contribution);
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw TapeError("backward: loss from another tape");
  if (consumed_) throw TapeError("backward: tape already consumed; run a new forward first");
  if (loss.value().size() != 1) {
    throw TapeError("backward: loss must be scalar, got " + shape_str(loss.value()));
  }
  consumed_ = true;
  Node& root = nodes_[loss.id()];
  if (!root.needs_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink) n.sink->accumulate_grad(n.grad);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.value()) + " * " +
                         shape_str(b.value()));
  }
  Var parents[] = {a, b};
  return a.tape().record("matmul", a.value() * b.value(), parents,
                         [a, b](Tape& t, const Matrix& g) {
                           if (t.requires_grad(a)) t.accumulate_expr(a, g * b.value().transpose());
                           if (t.requires_grad(b)) t.accumulate_expr(b, a.value().transpose() * g);
                         });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  Var parents[] = {a, b};
  return a.tape().record("add", a.value() + b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("sub", a, b);
  Var parents[] = {a, b};
  return a.tape().record("sub", a.value() - b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("mul", a, b);
  Var parents[] = {a, b};
  return a.tape().record("mul", a.value().cwiseProduct(b.value()), parents,
                         [a, b](Tape& t, const Matrix& g) {
                           t.accumulate_expr(a, g.cwiseProduct(b.value()));
                           t.accumulate_expr(b, g.cwiseProduct(a.value()));
                         });
}

Var scale(const Var& a, double s) {
  Var parents[] = {a};
  return a.tape().record("scale", a.value() * s, parents,
                         [a, s](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * s); });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: bias " + shape_str(row.value()) + " does not match " +
                         shape_str(a.value()));
  }
  Var parents[] = {a, row};
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().record("add_row", std::move(out), parents, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(row, g.colwise().sum());
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var sum(const Var& a) {
  Var parents[] = {a};
  return a.tape().record("sum", scalar_matrix(a.value().sum()), parents,
                         [a](Tape& t, const Matrix& g) {
                           t.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                         });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw DimensionError("mean: empty tensor");
  const double n = static_cast<double>(a.value().size());
  Var parents[] = {a};
  return a.tape().record("mean", scalar_matrix(a.value().sum() / n), parents,
                         [a, n](Tape& t, const Matrix& g) {
                           t.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
                         });
}

Var softmax_lastdim(const Var& x) {
  if (x.cols() < 1) throw DimensionError("softmax_lastdim: last extent must be >= 1");
  Var parents[] = {x};
  Matrix p = kernels::softmax_rows(x.value());
  return x.tape().record("softmax_lastdim", p, parents, [x, p](Tape& t, const Matrix& g) {
    const Eigen::VectorXd dot = g.cwiseProduct(p).rowwise().sum();
    t.accumulate_expr(x, p.cwiseProduct(g.colwise() - dot));
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(x.cols()));
  }
  auto stats = kernels::normalize_rows(x.value(), eps);
  Matrix out = (stats.normalized.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  Var parents[] = {x, gain, bias};
  return x.tape().record(
      "layer_norm", std::move(out), parents,
      [x, gain, bias, xhat = std::move(stats.normalized), inv_std = std::move(stats.inv_std)](
          Tape& t, const Matrix& g) {
        if (t.requires_grad(gain)) t.accumulate_expr(gain, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(bias)) t.accumulate_expr(bias, g.colwise().sum());
        if (t.requires_grad(x)) {
          const Matrix dxhat = (g.array().rowwise() * gain.value().row(0).array()).matrix();
          const Eigen::VectorXd mean_d = dxhat.rowwise().mean();
          const Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = dxhat;
          dx.colwise() -= mean_d;
          dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
          dx = (dx.array().colwise() * inv_std.array()).matrix();
          t.accumulate(x, dx);
        }
      });
}

Var gelu(const Var& x) {
  Var parents[] = {x};
  Matrix out = x.value().unaryExpr([](double v) { return kernels::gelu_tanh(v); });
  return x.tape().record("gelu", std::move(out), parents, [x](Tape& t, const Matrix& g) {
    t.accumulate_expr(
        x, g.cwiseProduct(x.value().unaryExpr([](double v) { return kernels::gelu_tanh_derivative(v); })));
  });
}

Var sigmoid(const Var& x) {
  Var parents[] = {x};
  Matrix out = x.value().unaryExpr([](double v) { return kernels::sigmoid(v); });
  Matrix slope = out.array() * (1.0 - out.array());
  return x.tape().record("sigmoid", std::move(out), parents,
                         [x, slope = std::move(slope)](Tape& t, const Matrix& g) {
                           t.accumulate_expr(x, g.cwiseProduct(slope));
                         });
}

Var reciprocal(const Var& x, double eps) {
  Var parents[] = {x};
  Matrix out = (x.value().array() + eps).inverse().matrix();
  Matrix slope = -out.array().square();
  return x.tape().record("reciprocal", std::move(out), parents,
                         [x, slope = std::move(slope)](Tape& t, const Matrix& g) {
                           t.accumulate_expr(x, g.cwiseProduct(slope));
                         });
}

Var embedding_lookup(const Var& table, std::span<const int> ids) {
  const Index vocab = table.rows();
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range [0," +
                       std::to_string(vocab) + ")");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  Var parents[] = {table};
  return table.tape().record(
      "embedding_lookup", std::move(out), parents,
      [table, ids = std::vector<int>(ids.begin(), ids.end())](Tape& t, const Matrix& g) {
        Matrix d = Matrix::Zero(table.rows(), table.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) d.row(ids[i]) += g.row(static_cast<Index>(i));
        t.accumulate(table, d);
      });
}

Var gather_rows(const Var& x, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    }
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  Var parents[] = {x};
  return x.tape().record(
      "gather_rows", std::move(out), parents,
      [x, rows = std::vector<Index>(rows.begin(), rows.end())](Tape& t, const Matrix& g) {
        Matrix d = Matrix::Zero(x.rows(), x.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) d.row(rows[i]) += g.row(static_cast<Index>(i));
        t.accumulate(x, d);
      });
}

Var slice_rows(const Var& x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + std::to_string(x.rows()) + " rows");
  }
  Var parents[] = {x};
  return x.tape().record("slice_rows", x.value().middleRows(begin, count), parents,
                         [x, begin, count](Tape& t, const Matrix& g) {
                           Matrix d = Matrix::Zero(x.rows(), x.cols());
                           d.middleRows(begin, count) = g;
                           t.accumulate(x, d);
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts[0].tape().record(
      "concat_rows", std::move(out), parts,
      [ps = std::vector<Var>(parts.begin(), parts.end())](Tape& t, const Matrix& g) {
        Index at = 0;
        for (const Var& p : ps) {
          t.accumulate_expr(p, g.middleRows(at, p.rows()));
          at += p.rows();
        }
      });
}

MaskedLoss cross_entropy_masked(const Var& logits, std::span<const int> targets,
                                const std::vector<bool>& mask) {
  const Index T = logits.rows();
  const Index V = logits.cols();
  if (static_cast<Index>(targets.size()) != T || static_cast<Index>(mask.size()) != T) {
    throw DimensionError("cross_entropy_masked: targets/mask length must equal " +
                         std::to_string(T));
  }
  std::size_t count = 0;
  for (Index i = 0; i < T; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= V) {
      throw IndexError("cross_entropy_masked: target " + std::to_string(targets[i]) +
                       " out of range [0," + std::to_string(V) + ")");
    }
    ++count;
  }
  if (count == 0) return {logits.tape().constant(scalar_matrix(0.0)), 0};

  const Matrix logp = kernels::log_softmax_rows(logits.value());
  double total = 0.0;
  for (Index i = 0; i < T; ++i) {
    if (mask[i]) total -= logp(i, targets[i]);
  }
  const double n = static_cast<double>(count);
  Var parents[] = {logits};
  Var loss = logits.tape().record(
      "cross_entropy_masked", scalar_matrix(total / n), parents,
      [logits, logp, tg = std::vector<int>(targets.begin(), targets.end()), mask, n](
          Tape& t, const Matrix& g) {
        Matrix d = Matrix::Zero(logp.rows(), logp.cols());
        const double s = g(0, 0) / n;
        for (Index i = 0; i < logp.rows(); ++i) {
          if (!mask[i]) continue;
          d.row(i) = logp.row(i).array().exp().matrix() * s;
          d(i, tg[i]) -= s;
        }
        t.accumulate(logits, d);
      });
  return {loss, count};
}

MaskedLoss masked_mean_squared_error(const Var& pred, const Var& target,
                                     const std::vector<bool>& mask) {
  require_same_tape(pred, target);
  require_same_shape("masked_mean_squared_error", pred, target);
  if (static_cast<Index>(mask.size()) != pred.rows()) {
    throw DimensionError("masked_mean_squared_error: mask length must equal " +
                         std::to_string(pred.rows()));
  }
  std::size_t count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0 || pred.cols() == 0) return {pred.tape().constant(scalar_matrix(0.0)), 0};

  const double n = static_cast<double>(count) * static_cast<double>(pred.cols());
  Matrix diff = pred.value() - target.value();
  for (Index i = 0; i < diff.rows(); ++i) {
    if (!mask[i]) diff.row(i).setZero();
  }
  Var parents[] = {pred, target};
  Var loss = pred.tape().record("masked_mean_squared_error",
                                scalar_matrix(diff.squaredNorm() / n), parents,
                                [pred, target, diff, n](Tape& t, const Matrix& g) {
                                  const double s = 2.0 * g(0, 0) / n;
                                  t.accumulate_expr(pred, diff * s);
                                  t.accumulate_expr(target, diff * -s);
                                });
  return {loss, count};
}

AttentionResult multi_head_attention(const Var& q, const Var& k, const Var& v, int n_heads,
                                     bool causal) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  require_same_shape("multi_head_attention", q, k);
  require_same_shape("multi_head_attention", q, v);
  const Index T = q.rows();
  const Index d = q.cols();
  if (n_heads <= 0 || d % n_heads != 0) {
    throw DimensionError("multi_head_attention: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(n_heads));
  }
  const Index dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionResult result;
  result.weights.reserve(n_heads);
  Matrix out(T, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = q.value().middleCols(h * dh, dh);
    const auto kh = k.value().middleCols(h * dh, dh);
    const auto vh = v.value().middleCols(h * dh, dh);
    const Matrix scores = (qh * kh.transpose()) * inv_sqrt;
    Matrix p = causal ? kernels::causal_softmax_rows(scores) : kernels::softmax_rows(scores);
    out.middleCols(h * dh, dh) = p * vh;
    result.weights.push_back(std::move(p));
  }

  Var parents[] = {q, k, v};
  result.out = q.tape().record(
      "multi_head_attention", std::move(out), parents,
      [q, k, v, n_heads, dh, inv_sqrt, probs = result.weights](Tape& t, const Matrix& g) {
        Matrix dq = Matrix::Zero(q.rows(), q.cols());
        Matrix dk = Matrix::Zero(k.rows(), k.cols());
        Matrix dv = Matrix::Zero(v.rows(), v.cols());
        for (int h = 0; h < n_heads; ++h) {
          const Matrix& p = probs[h];
          const auto gh = g.middleCols(h * dh, dh);
          const auto qh = q.value().middleCols(h * dh, dh);
          const auto kh = k.value().middleCols(h * dh, dh);
          const auto vh = v.value().middleCols(h * dh, dh);
          dv.middleCols(h * dh, dh) = p.transpose() * gh;
          const Matrix dp = gh * vh.transpose();
          const Eigen::VectorXd dot = dp.cwiseProduct(p).rowwise().sum();
          const Matrix ds = p.cwiseProduct(dp.colwise() - dot) * inv_sqrt;
          dq.middleCols(h * dh, dh) = ds * kh;
          dk.middleCols(h * dh, dh) = ds.transpose() * qh;
        }
        t.accumulate(q, dq);
        t.accumulate(k, dk);
        t.accumulate(v, dv);
      });
  return result;
}

}  // namespace vdep
