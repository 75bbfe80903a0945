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

#include "vdep/config.hpp"
#include "vdep/eval.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vdep {

enum class SweepGrid { Alpha, Ratio, LossFn };
std::string_view to_string(SweepGrid g);
std::optional<SweepGrid> parse_sweep_grid(std::string_view s);

struct SweepPoint {
  std::string label;  // grid value as printed in the comparison table
  TrainConfig train;
};

/// alpha: {0.1, 0.01, 0.001}; ratio: {0.5, 0.8, 1.0};
/// lossfn: {inverse_l2, sigmoid_l2, l2}. Everything else, seed included,
/// comes from `base`.
std::vector<SweepPoint> sweep_points(const TrainConfig& base, SweepGrid grid);

/// Held-out evaluation set: 64 samples under a master seed disjoint from the
/// training one.
DatasetSpec holdout_spec(const DatasetSpec& train);

struct SweepRow {
  std::string label;
  TrainConfig train;
  double final_l_text = 0.0;   // mean over the last 10 steps
  double final_l_image = 0.0;  // mean over the last 10 steps with Vdep samples
  EvalReport eval;
};

std::string comparison_csv(SweepGrid grid, std::span<const SweepRow> rows);

/// Trains every grid point in order. Each point gets out/<grid>_<label>/
/// with its checkpoint, metrics and resolved config; the comparison table
/// goes to out/<grid>_comparison.csv.
std::vector<SweepRow> run_sweep(const RunConfig& cfg, SweepGrid grid,
                                const std::filesystem::path& out);

/// Output files of one training run.
struct RunArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path resolved_config;
};
RunArtifacts run_artifacts(const std::filesystem::path& dir);

/// Writes checkpoint, metrics log and the resolved config into `dir`.
RunArtifacts write_run(const std::filesystem::path& dir, const RunConfig& cfg,
                       const StageResult& result);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vdep
