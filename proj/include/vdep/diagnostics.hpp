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

#include "vdep/objective.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vdep {

struct MIEstimate {
  double h_x = 0.0;          // bits
  double h_y = 0.0;          // bits
  double h_x_given_y = 0.0;  // bits
  double mi = 0.0;           // bits, summed directly over the joint table
  Index rows = 0;
  Index cols = 0;
};

using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_valid_counts(long long total, bool any_negative);

namespace detail {
inline const std::array<double, 1024> kLog2Small = [] {
  std::array<double, 1024> t{};
  for (std::size_t k = 1; k < t.size(); ++k) t[k] = std::log2(static_cast<double>(k));
  return t;
}();
}  // namespace detail

/// log2 of a non-negative integer count; small counts come from a table.
inline double log2_count(long long c) {
  return c >= 0 && c < 1024 ? detail::kLog2Small[static_cast<std::size_t>(c)]
                            : std::log2(static_cast<double>(c));
}

/// Plug-in estimate from a joint count table (rows = X, cols = Y), base-2
/// logs with 0 log 0 = 0. I(X;Y) is summed directly from the joint so that
/// H(X) - H(X|Y) is an independent second route to the same number.
template <typename Derived>
MIEstimate discrete_mutual_information(const Eigen::MatrixBase<Derived>& counts) {
  const Index R = counts.rows();
  const Index C = counts.cols();
  long long total = 0;
  bool negative = false;
  for (Index i = 0; i < R; ++i) {
    for (Index j = 0; j < C; ++j) {
      const auto c = static_cast<long long>(counts(i, j));
      negative = negative || c < 0;
      total += c;
    }
  }
  require_valid_counts(total, negative);

  // Work in counts: p = c / n, so log2 p = log2 c - log2 n.
  using Marg = Eigen::Matrix<double, Derived::RowsAtCompileTime, 1>;
  using MargY = Eigen::Matrix<double, Derived::ColsAtCompileTime, 1>;
  const double n = static_cast<double>(total);
  const double log_n = log2_count(total);
  Marg cx = Marg::Zero(R);
  MargY cy = MargY::Zero(C);
  for (Index i = 0; i < R; ++i) {
    for (Index j = 0; j < C; ++j) {
      const double c = static_cast<double>(counts(i, j));
      cx(i) += c;
      cy(j) += c;
    }
  }
  Marg lx = Marg::Zero(R);
  MargY ly = MargY::Zero(C);
  MIEstimate e;
  e.rows = R;
  e.cols = C;
  for (Index i = 0; i < R; ++i) {
    if (cx(i) > 0.0) {
      lx(i) = log2_count(static_cast<long long>(cx(i))) - log_n;
      e.h_x -= cx(i) / n * lx(i);
    }
  }
  for (Index j = 0; j < C; ++j) {
    if (cy(j) > 0.0) {
      ly(j) = log2_count(static_cast<long long>(cy(j))) - log_n;
      e.h_y -= cy(j) / n * ly(j);
    }
  }
  double mi = 0.0;
  for (Index i = 0; i < R; ++i) {
    for (Index j = 0; j < C; ++j) {
      if (counts(i, j) == 0) continue;
      const auto c = static_cast<long long>(counts(i, j));
      const double p = static_cast<double>(c) / n;
      const double lp = log2_count(c) - log_n;
      e.h_x_given_y -= p * (lp - ly(j));
      mi += p * (lp - lx(i) - ly(j));
    }
  }
  e.mi = mi < 0.0 && mi > -1e-12 ? 0.0 : mi;
  return e;
}

CountMatrix joint_counts(std::span<const int> x, std::span<const int> y, int x_symbols, int y_symbols);

/// Equal-width binning of the first `dims` coordinates, with bin edges taken
/// from a reference (target) set. Values outside the reference range clamp
/// to the edge bins; a constant reference dimension maps to bin 0.
class EmbeddingQuantizer {
 public:
  static EmbeddingQuantizer fit(const Matrix& reference, int bins = 4, int dims = 2);

  std::vector<int> encode(const Matrix& vectors) const;
  int symbol_count() const;
  int bins() const { return bins_; }
  int dims() const { return dims_; }

 private:
  RowVector lo_;
  RowVector hi_;
  int bins_ = 4;
  int dims_ = 2;
};

/// Quantizes a set against its own min/max.
std::vector<int> quantize_embeddings(const Matrix& vectors, int bins = 4, int dims = 2);

struct ProbeReport {
  double accuracy = 0.0;
  double mean_l2 = 0.0;
  std::size_t count = 0;
};

/// Nearest neighbour (L2) of every hidden row among all target rows; a hit
/// when the neighbour is the row's own paired target.
ProbeReport reconstruction_probe(const Matrix& targets, const Matrix& hidden);

/// Image-embedding targets and the hidden states paired with them, collected
/// from Vdep-mode forwards over `samples` (rows stacked in sample order).
struct AlignmentPairs {
  Matrix targets;
  Matrix hidden;
  double l_image = 0.0;
};
AlignmentPairs collect_alignment_pairs(const Parameters& params,
                                       std::span<const MultimodalSample> samples,
                                       const ModelConfig& model, const ImageLossConfig& cfg);

struct TrajectoryPoint {
  std::size_t snapshot = 0;
  double l_image = 0.0;
  MIEstimate mi;
};

/// For each snapshot, quantize (X_I, X_I^h) pairs on the fixed batch with
/// edges from that snapshot's targets and estimate the MI between them.
std::vector<TrajectoryPoint> mi_trajectory(std::span<const Parameters> snapshots,
                                           std::span<const MultimodalSample> batch,
                                           const ModelConfig& model, const ImageLossConfig& cfg,
                                           int bins = 4, int dims = 2);

std::string trajectory_csv(std::span<const TrajectoryPoint> points);

struct AttentionFlowMap {
  int layer = 0;
  Index query = 0;
  int head = -1;  // -1: mean over heads
  Matrix grid;    // grid_rows x grid_cols, patch reading order
  std::string normalization = "mean over heads; raw attention probabilities";
};

AttentionFlowMap attention_flow(const std::vector<std::vector<Matrix>>& attention,
                                const SequenceLayout& layout, Index query, int layer, int grid_rows,
                                int grid_cols, std::optional<int> head = std::nullopt);
AttentionFlowMap attention_flow(const ForwardOutput& out, Index query, int layer,
                                const ModelConfig& model, std::optional<int> head = std::nullopt);

struct HeatmapFiles {
  std::filesystem::path pgm;
  std::filesystem::path csv;
  std::filesystem::path json;
};

/// <prefix>_L<layer>_q<pos>.{pgm,csv,json}: a min-max normalized 255-level
/// plain graymap, the raw grid values, and metadata.
HeatmapFiles write_heatmap(const AttentionFlowMap& map, const std::string& path_prefix);
Matrix read_grid_csv(const std::filesystem::path& path);

}  // namespace vdep
