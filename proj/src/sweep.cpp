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

#include "vdep/sweep.hpp"

#include "vdep/checkpoint.hpp"
#include "vdep/errors.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace vdep {

std::string_view to_string(SweepGrid g) {
  switch (g) {
    case SweepGrid::Alpha:
      return "alpha";
    case SweepGrid::Ratio:
      return "ratio";
    case SweepGrid::LossFn:
      return "lossfn";
  }
  return "alpha";
}

std::optional<SweepGrid> parse_sweep_grid(std::string_view s) {
  if (s == "alpha") return SweepGrid::Alpha;
  if (s == "ratio") return SweepGrid::Ratio;
  if (s == "lossfn") return SweepGrid::LossFn;
  return std::nullopt;
}

std::vector<SweepPoint> sweep_points(const TrainConfig& base, SweepGrid grid) {
  std::vector<SweepPoint> points;
  switch (grid) {
    case SweepGrid::Alpha:
      for (auto [label, a] : {std::pair{"0.1", 0.1}, {"0.01", 0.01}, {"0.001", 0.001}}) {
        TrainConfig t = base;
        t.alpha = a;
        points.push_back({label, t});
      }
      break;
    case SweepGrid::Ratio:
      for (auto [label, r] : {std::pair{"0.5", 0.5}, {"0.8", 0.8}, {"1.0", 1.0}}) {
        TrainConfig t = base;
        t.data_ratio = r;
        points.push_back({label, t});
      }
      break;
    case SweepGrid::LossFn:
      for (LossVariant v : {LossVariant::InverseL2, LossVariant::SigmoidL2, LossVariant::L2}) {
        TrainConfig t = base;
        t.loss_variant = v;
        points.push_back({std::string(to_string(v)), t});
      }
      break;
  }
  return points;
}

DatasetSpec holdout_spec(const DatasetSpec& train) {
  DatasetSpec h = train;
  h.size = 64;
  h.master_seed = train.master_seed ^ 0x9e3779b97f4a7c15ULL;
  return h;
}

namespace {

double tail_mean(std::span<const MetricsRecord> m, bool image) {
  double acc = 0.0;
  std::size_t n = 0;
  for (auto it = m.rbegin(); it != m.rend() && n < 10; ++it) {
    if (image && it->vdep_samples == 0) continue;
    acc += image ? it->l_image : it->l_text;
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace

std::string comparison_csv(SweepGrid grid, std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "grid,value,alpha,data_ratio,loss_variant,seed,final_l_text,final_l_image,"
        "eval_l_image,exact_match,shape_acc,color_acc,row_acc,col_acc,probe_acc\n";
  for (const auto& r : rows) {
    os << to_string(grid) << ',' << r.label << ',' << r.train.alpha << ',' << r.train.data_ratio
       << ',' << to_string(r.train.loss_variant) << ',' << r.train.seed << ',' << r.final_l_text
       << ',' << r.final_l_image << ',' << r.eval.l_image << ',' << r.eval.exact_match << ','
       << r.eval.shape_accuracy << ',' << r.eval.color_accuracy << ',' << r.eval.row_accuracy
       << ',' << r.eval.col_accuracy << ',' << r.eval.probe.accuracy << '\n';
  }
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

RunArtifacts run_artifacts(const std::filesystem::path& dir) {
  return {dir / "checkpoint.vdck", dir / "metrics.jsonl", dir / "resolved_config.json"};
}

RunArtifacts write_run(const std::filesystem::path& dir, const RunConfig& cfg,
                       const StageResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const RunArtifacts a = run_artifacts(dir);
  save_checkpoint(result.params, cfg.model, cfg.train, a.checkpoint);
  write_text_file(a.metrics, metrics_log(result.metrics));
  save_run_config(cfg, a.resolved_config);
  return a;
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, SweepGrid grid,
                                const std::filesystem::path& out) {
  cfg.validate();
  const auto train_set = generate_dataset(cfg.data);
  const auto held = generate_dataset(holdout_spec(cfg.data));
  std::vector<SweepRow> rows;
  for (const SweepPoint& p : sweep_points(cfg.train, grid)) {
    RunConfig point = cfg;
    point.train = p.train;
    point.validate();
    const StageResult result = run_stage(point.train, point.model, train_set);
    write_run(out / (std::string(to_string(grid)) + "_" + p.label), point, result);

    SweepRow row;
    row.label = p.label;
    row.train = p.train;
    row.final_l_text = tail_mean(result.metrics, false);
    row.final_l_image = tail_mean(result.metrics, true);
    row.eval = evaluate(result.params, held, point.model, point.train.hybrid().image);
    rows.push_back(row);
  }
  write_text_file(out / (std::string(to_string(grid)) + "_comparison.csv"), comparison_csv(grid, rows));
  return rows;
}

}  // namespace vdep
