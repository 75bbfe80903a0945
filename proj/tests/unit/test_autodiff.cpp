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
#include "vdep/gradcheck.hpp"
#include "vdep/gradcheck_suite.hpp"
#include "vdep/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace vdep;
using namespace vdep::kernels;

namespace {

Matrix randn(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Independent log-sum-exp cross entropy, averaged over all rows.
double reference_ce(const Matrix& logits, const std::vector<int>& targets) {
  double total = 0.0;
  for (Index r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    double s = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) s += std::exp(logits(r, c) - mx);
    total += mx + std::log(s) - logits(r, targets[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TEST_CASE("matmul gradient matches central differences below 1e-6") {
  std::mt19937_64 rng(11);
  const Matrix b = randn(rng, 5, 3);
  const Matrix w = randn(rng, 4, 3);
  const double err = finite_diff_gradcheck(
      [&](Tape& t, const Var& a) { return sum(mul(matmul(a, t.constant(b)), t.constant(w))); },
      Tensor(randn(rng, 4, 5)));
  CHECK(err < 1e-6);
}

TEST_CASE("layer_norm gradient below 1e-5") {
  std::mt19937_64 rng(5);
  const Matrix g = randn(rng, 1, 6);
  const Matrix b = randn(rng, 1, 6);
  const Matrix w = randn(rng, 3, 6);
  const double err = finite_diff_gradcheck(
      [&](Tape& t, const Var& x) {
        return sum(mul(layer_norm(x, t.constant(g), t.constant(b), 1e-5), t.constant(w)));
      },
      Tensor(randn(rng, 3, 6)));
  CHECK(err < 1e-5);
}

TEST_CASE("softmax on a random 2x8 input: gradient below 1e-5, rows sum to one") {
  std::mt19937_64 rng(2);
  const Matrix x = randn(rng, 2, 8);
  const Matrix w = randn(rng, 2, 8);
  const double err = finite_diff_gradcheck(
      [&](Tape& t, const Var& v) { return sum(mul(softmax_lastdim(v), t.constant(w))); }, Tensor(x));
  CHECK(err < 1e-5);

  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(static_cast<std::uint64_t>(seed));
    const Matrix p = softmax_rows(Matrix(randn(r, 4, 9) * 10.0));
    for (Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
    CHECK((p.array() > 0.0).all());
  }
}

TEST_CASE("embedding lookup sums gradients of repeated ids") {
  Tape tape;
  Tensor table(Matrix::Zero(3, 2), true);
  Var t = tape.leaf(table);
  const std::vector<int> ids{1, 1, 2, 1};
  Matrix w(4, 2);
  w << 1, 2, 3, 4, 5, 6, 7, 8;
  tape.backward(sum(mul(embedding_lookup(t, ids), tape.constant(w))));
  const Matrix g = tape.grad(t);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == 1 + 3 + 7);
  CHECK(g(1, 1) == 2 + 4 + 8);
  CHECK(g(2, 0) == 5);

  std::mt19937_64 rng(4);
  const Matrix w2 = randn(rng, 4, 2);
  const double err = finite_diff_gradcheck(
      [&](Tape& tp, const Var& v) { return sum(mul(embedding_lookup(v, ids), tp.constant(w2))); },
      Tensor(randn(rng, 3, 2)));
  CHECK(err < 1e-6);
}

TEST_CASE("embedding lookup rejects out-of-range ids") {
  Tape tape;
  Var t = tape.constant(Matrix::Zero(3, 2));
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(embedding_lookup(t, bad), IndexError);
  const std::vector<int> neg{-1};
  CHECK_THROWS_AS(embedding_lookup(t, neg), IndexError);
}

TEST_CASE("masked cross entropy with every row enabled equals the unmasked value") {
  std::mt19937_64 rng(9);
  const Matrix logits = randn(rng, 6, 5);
  const std::vector<int> targets{0, 4, 2, 2, 1, 3};
  Tape tape;
  const MaskedLoss ce = cross_entropy_masked(tape.constant(logits), targets, std::vector<bool>(6, true));
  CHECK(ce.count == 6);
  CHECK(ce.value.item() == doctest::Approx(reference_ce(logits, targets)).epsilon(1e-14));

  const MaskedLoss none = cross_entropy_masked(tape.constant(logits), targets, std::vector<bool>(6, false));
  CHECK(none.count == 0);
  CHECK(none.value.item() == 0.0);
}

TEST_CASE("masked cross entropy leaves disabled rows with exactly zero gradient") {
  std::mt19937_64 rng(3);
  Tape tape;
  Tensor logits(randn(rng, 5, 4), true);
  Var l = tape.leaf(logits);
  const std::vector<bool> mask{false, true, false, true, false};
  const std::vector<int> targets{1, 2, 3, 0, 1};
  tape.backward(cross_entropy_masked(l, targets, mask).value);
  const Matrix g = tape.grad(l);
  for (Index r : {0, 2, 4}) CHECK((g.row(r).array() == 0.0).all());
  CHECK(g.row(1).cwiseAbs().sum() > 0.0);
}

TEST_CASE("causal softmax zeroes the future exactly") {
  std::mt19937_64 rng(1);
  Matrix x = randn(rng, 5, 5);
  x(0, 4) = std::numeric_limits<double>::infinity();  // never read
  const Matrix p = causal_softmax_rows(x);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i + 1; j < 5; ++j) CHECK(p(i, j) == 0.0);
    CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("attention weights are row-stochastic and causal") {
  std::mt19937_64 rng(8);
  Tape tape;
  const auto r = multi_head_attention(tape.constant(randn(rng, 6, 8)), tape.constant(randn(rng, 6, 8)),
                                      tape.constant(randn(rng, 6, 8)), 2, true);
  REQUIRE(r.weights.size() == 2);
  for (const Matrix& w : r.weights) {
    for (Index i = 0; i < 6; ++i) {
      CHECK(std::abs(w.row(i).sum() - 1.0) <= 1e-12);
      for (Index j = i + 1; j < 6; ++j) CHECK(w(i, j) == 0.0);
    }
  }
}

TEST_CASE("non-finite values raise NumericError") {
  Tape tape;
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tape.constant(bad), NumericError);
  Var a = tape.constant(Matrix::Constant(2, 2, 1e308));
  CHECK_THROWS_AS(add(a, a), NumericError);
  Var big = tape.constant(Matrix::Constant(1, 1, 1e308));
  CHECK_THROWS_AS(scale(big, 10.0), NumericError);
}

TEST_CASE("shape mismatches raise DimensionError") {
  Tape tape;
  Var a = tape.constant(Matrix::Ones(2, 3));
  Var b = tape.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, tape.constant(Matrix::Ones(3, 2))), DimensionError);
}

TEST_CASE("a tape runs backward once") {
  Tape tape;
  Tensor x(Matrix::Ones(2, 2), true);
  Var v = tape.leaf(x);
  Var loss = sum(v);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), TapeError);
}

TEST_CASE("watched tensors accumulate gradients across tapes") {
  Tensor x(Matrix::Ones(1, 3), true);
  for (int k = 0; k < 2; ++k) {
    Tape tape;
    tape.backward(sum(tape.watch(x)));
  }
  REQUIRE(x.has_grad());
  CHECK((x.grad().array() == 2.0).all());
}

TEST_CASE("every op passes the finite-difference check on twenty seeds") {
  const auto cases = op_gradcheck_suite(20, 1000);
  CHECK(cases.size() >= 20 * 22);
  for (const auto& c : cases) {
    INFO(c.name, " seed ", c.seed, " worst ", c.report.worst_input);
    CHECK(c.report.max_rel_error < 1e-4);
  }
}

TEST_CASE("relative error uses a 1e-6 floor") {
  CHECK(gradcheck_relative_error(1.0, 1.0) == 0.0);
  CHECK(gradcheck_relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(gradcheck_relative_error(0.0, 1e-12) == doctest::Approx(1e-6));
}

TEST_CASE("kernels accept single precision") {
  Eigen::Matrix<float, 2, 3, Eigen::RowMajor> x;
  x << 1, 2, 3, -1, 0, 1;
  const auto p = softmax_rows(x);
  CHECK(std::abs(p.row(0).sum() - 1.0f) < 1e-6f);
  const auto stats = normalize_rows(x, 1e-5f);
  CHECK(std::abs(stats.normalized.row(1).mean()) < 1e-6f);
}
