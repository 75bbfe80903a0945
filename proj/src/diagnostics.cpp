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

#include "vdep/diagnostics.hpp"

#include "vdep/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace vdep {

void require_valid_counts(long long total, bool any_negative) {
  if (any_negative) throw DomainError("discrete_mutual_information: negative count");
  if (total < 1) throw DomainError("discrete_mutual_information: table has no observations");
}

CountMatrix joint_counts(std::span<const int> x, std::span<const int> y, int x_symbols, int y_symbols) {
  if (x.size() != y.size()) throw DimensionError("joint_counts: streams differ in length");
  CountMatrix c = CountMatrix::Zero(x_symbols, y_symbols);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= x_symbols || y[i] < 0 || y[i] >= y_symbols) {
      throw IndexError("joint_counts: symbol out of range");
    }
    c(x[i], y[i]) += 1;
  }
  return c;
}

// ---------------------------------------------------------------------------

EmbeddingQuantizer EmbeddingQuantizer::fit(const Matrix& reference, int bins, int dims) {
  if (bins < 1) throw DomainError("quantize: bins must be >= 1");
  if (dims < 1 || dims > reference.cols()) throw DomainError("quantize: dims out of range");
  if (reference.rows() < 1) throw DomainError("quantize: empty reference set");
  EmbeddingQuantizer q;
  q.bins_ = bins;
  q.dims_ = dims;
  q.lo_ = reference.leftCols(dims).colwise().minCoeff();
  q.hi_ = reference.leftCols(dims).colwise().maxCoeff();
  return q;
}

int EmbeddingQuantizer::symbol_count() const {
  int n = 1;
  for (int d = 0; d < dims_; ++d) n *= bins_;
  return n;
}

std::vector<int> EmbeddingQuantizer::encode(const Matrix& vectors) const {
  if (vectors.cols() < dims_) throw DimensionError("quantize: vectors narrower than dims_used");
  std::vector<int> out(static_cast<std::size_t>(vectors.rows()));
  for (Index r = 0; r < vectors.rows(); ++r) {
    int symbol = 0;
    int radix = 1;
    for (int d = 0; d < dims_; ++d) {
      const double range = hi_(d) - lo_(d);
      int bin = 0;
      if (range > 0.0) {
        bin = static_cast<int>(std::floor((vectors(r, d) - lo_(d)) / range * bins_));
        bin = std::clamp(bin, 0, bins_ - 1);
      }
      symbol += bin * radix;
      radix *= bins_;
    }
    out[r] = symbol;
  }
  return out;
}

std::vector<int> quantize_embeddings(const Matrix& vectors, int bins, int dims) {
  return EmbeddingQuantizer::fit(vectors, bins, dims).encode(vectors);
}

// ---------------------------------------------------------------------------

ProbeReport reconstruction_probe(const Matrix& targets, const Matrix& hidden) {
  if (targets.rows() != hidden.rows() || targets.cols() != hidden.cols()) {
    throw DimensionError("reconstruction_probe: targets and hidden rows must pair up");
  }
  ProbeReport r;
  r.count = static_cast<std::size_t>(hidden.rows());
  if (r.count == 0) return r;
  std::size_t hits = 0;
  double dist_sum = 0.0;
  for (Index i = 0; i < hidden.rows(); ++i) {
    Index best = 0;
    (targets.rowwise() - hidden.row(i)).rowwise().squaredNorm().minCoeff(&best);
    hits += best == i ? 1 : 0;
    dist_sum += (targets.row(i) - hidden.row(i)).norm();
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.count);
  r.mean_l2 = dist_sum / static_cast<double>(r.count);
  return r;
}

AlignmentPairs collect_alignment_pairs(const Parameters& params,
                                       std::span<const MultimodalSample> samples,
                                       const ModelConfig& model, const ImageLossConfig& cfg) {
  if (samples.empty()) throw DomainError("collect_alignment_pairs: no samples");
  Tape tape;
  ParamBinder P(tape, params, /*track_grad=*/false);
  std::vector<SampleForward> forwards;
  std::vector<Matrix> t_rows;
  std::vector<Matrix> h_rows;
  Index total = 0;
  for (const auto& s : samples) {
    forwards.push_back(forward_sample(P, s, ModeLabel::Vdep, model));
    const SampleForward& f = forwards.back();
    const auto masks = supervision_masks(f.output.layout, ModeLabel::Vdep, cfg.offset);
    Matrix t(static_cast<Index>(masks.image_pairs.size()), model.d_model);
    Matrix h(t.rows(), model.d_model);
    for (std::size_t k = 0; k < masks.image_pairs.size(); ++k) {
      h.row(static_cast<Index>(k)) = f.output.hidden.value().row(masks.image_pairs[k].first);
      t.row(static_cast<Index>(k)) = f.image_embeddings.value().row(masks.image_pairs[k].second);
    }
    total += t.rows();
    t_rows.push_back(std::move(t));
    h_rows.push_back(std::move(h));
  }
  AlignmentPairs out;
  out.targets.resize(total, model.d_model);
  out.hidden.resize(total, model.d_model);
  Index at = 0;
  for (std::size_t i = 0; i < t_rows.size(); ++i) {
    out.targets.middleRows(at, t_rows[i].rows()) = t_rows[i];
    out.hidden.middleRows(at, h_rows[i].rows()) = h_rows[i];
    at += t_rows[i].rows();
  }
  HybridConfig hc;
  hc.alpha = 1.0;
  hc.image = cfg;
  out.l_image = hybrid_loss(forwards, hc).breakdown.l_image;
  return out;
}

std::vector<TrajectoryPoint> mi_trajectory(std::span<const Parameters> snapshots,
                                           std::span<const MultimodalSample> batch,
                                           const ModelConfig& model, const ImageLossConfig& cfg,
                                           int bins, int dims) {
  std::vector<TrajectoryPoint> out;
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    const AlignmentPairs pairs = collect_alignment_pairs(snapshots[s], batch, model, cfg);
    const auto q = EmbeddingQuantizer::fit(pairs.targets, bins, dims);
    const auto xs = q.encode(pairs.targets);
    const auto ys = q.encode(pairs.hidden);
    const int k = q.symbol_count();
    out.push_back({s, pairs.l_image, discrete_mutual_information(joint_counts(xs, ys, k, k))});
  }
  return out;
}

std::string trajectory_csv(std::span<const TrajectoryPoint> points) {
  std::ostringstream os;
  os << "snapshot,l_image,H_X,H_X_given_Y,I_bits\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", p.snapshot, p.l_image, p.mi.h_x,
                  p.mi.h_x_given_y, p.mi.mi);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

AttentionFlowMap attention_flow(const std::vector<std::vector<Matrix>>& attention,
                                const SequenceLayout& layout, Index query, int layer, int grid_rows,
                                int grid_cols, std::optional<int> head) {
  if (layer < 0 || layer >= static_cast<int>(attention.size())) {
    throw UsageError("attention_flow: layer " + std::to_string(layer) + " out of range");
  }
  if (query < 0 || query >= layout.total) {
    throw UsageError("attention_flow: query position " + std::to_string(query) + " out of range");
  }
  if (query >= layout.image_begin && query < layout.image_end) {
    throw UsageError("attention_flow: query position " + std::to_string(query) +
                     " lies inside the image range");
  }
  const Index n_img = layout.image_end - layout.image_begin;
  if (n_img != static_cast<Index>(grid_rows) * grid_cols) {
    throw DimensionError("attention_flow: image range does not match the patch grid");
  }
  const auto& heads = attention[layer];
  if (heads.empty()) throw UsageError("attention_flow: layer has no heads");
  if (head && (*head < 0 || *head >= static_cast<int>(heads.size()))) {
    throw UsageError("attention_flow: head out of range");
  }

  RowVector row;
  if (head) {
    row = heads[*head].row(query);
  } else {
    row = RowVector::Zero(heads.front().cols());
    for (const Matrix& h : heads) row += h.row(query);
    row /= static_cast<double>(heads.size());
  }

  AttentionFlowMap map;
  map.layer = layer;
  map.query = query;
  map.head = head.value_or(-1);
  if (head) map.normalization = "head " + std::to_string(*head) + "; raw attention probabilities";
  map.grid.resize(grid_rows, grid_cols);
  for (Index k = 0; k < n_img; ++k) map.grid(k / grid_cols, k % grid_cols) = row(layout.image_begin + k);
  return map;
}

AttentionFlowMap attention_flow(const ForwardOutput& out, Index query, int layer,
                                const ModelConfig& model, std::optional<int> head) {
  return attention_flow(out.attention, out.layout, query, layer, model.grid_side(), model.grid_side(),
                        head);
}

HeatmapFiles write_heatmap(const AttentionFlowMap& map, const std::string& path_prefix) {
  const std::string stem =
      path_prefix + "_L" + std::to_string(map.layer) + "_q" + std::to_string(map.query);
  HeatmapFiles files{stem + ".pgm", stem + ".csv", stem + ".json"};
  if (const auto dir = files.pgm.parent_path(); !dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }

  const double lo = map.grid.minCoeff();
  const double hi = map.grid.maxCoeff();
  const double range = hi - lo;

  {
    std::ofstream pgm(files.pgm, std::ios::binary);
    if (!pgm) throw IoError("cannot write " + files.pgm.string());
    pgm << "P2\n" << map.grid.cols() << ' ' << map.grid.rows() << "\n255\n";
    for (Index r = 0; r < map.grid.rows(); ++r) {
      for (Index c = 0; c < map.grid.cols(); ++c) {
        const long level = range > 0.0 ? std::lround((map.grid(r, c) - lo) / range * 255.0) : 0;
        pgm << level << (c + 1 < map.grid.cols() ? ' ' : '\n');
      }
    }
  }
  {
    std::ofstream csv(files.csv, std::ios::binary);
    if (!csv) throw IoError("cannot write " + files.csv.string());
    char buf[64];
    for (Index r = 0; r < map.grid.rows(); ++r) {
      for (Index c = 0; c < map.grid.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", map.grid(r, c));
        csv << buf << (c + 1 < map.grid.cols() ? ',' : '\n');
      }
    }
  }
  {
    nlohmann::ordered_json meta;
    meta["layer"] = map.layer;
    meta["query"] = map.query;
    meta["head"] = map.head < 0 ? nlohmann::ordered_json("mean") : nlohmann::ordered_json(map.head);
    meta["grid_rows"] = map.grid.rows();
    meta["grid_cols"] = map.grid.cols();
    meta["image_mass"] = map.grid.sum();
    meta["normalization"] = map.normalization;
    meta["pgm_scale"] = {{"min", lo}, {"max", hi}, {"levels", 255}, {"rule", "min-max per map"}};
    std::ofstream js(files.json, std::ios::binary);
    if (!js) throw IoError("cannot write " + files.json.string());
    js << meta.dump(2) << '\n';
  }
  return files;
}

Matrix read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(line_no, "not a number: '" + cell + "'");
      }
    }
    if (!rows.empty() && vals.size() != rows.front().size()) throw ParseError(line_no, "ragged row");
    rows.push_back(std::move(vals));
  }
  Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

}  // namespace vdep
