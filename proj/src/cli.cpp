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

#include "vdep/cli.hpp"

#include "vdep/checkpoint.hpp"
#include "vdep/config.hpp"
#include "vdep/errors.hpp"
#include "vdep/eval.hpp"
#include "vdep/gradcheck_suite.hpp"
#include "vdep/sweep.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace vdep {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradSeeds = 20;

struct Options {
  std::string spec, config, out, ckpt, data, init, stage, grid, layers = "all";
  std::uint64_t seed = 0;
  std::size_t index = 0;
  long long query_pos = -1;
  bool half_split = false;
  bool full = false;
};

std::vector<int> parse_layers(const std::string& text, int n_layers) {
  std::vector<int> layers;
  if (text == "all") {
    for (int l = 0; l < n_layers; ++l) layers.push_back(l);
    return layers;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int l = -1;
    try {
      l = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty()) throw UsageError("--layers: '" + item + "' is not an integer");
    if (l < 0 || l >= n_layers) {
      throw UsageError("--layers: layer " + item + " outside [0," + std::to_string(n_layers) + ")");
    }
    layers.push_back(l);
  }
  if (layers.empty()) throw UsageError("--layers: empty list");
  return layers;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o.spec);
  validate(cfg.data);
  const auto samples = generate_dataset(cfg.data);
  write_dataset(samples, o.out);
  out << "N=" << samples.size() << " master_seed=" << cfg.data.master_seed << " -> " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig cfg = load_run_config(o.config);
  cfg.train.seed = o.seed;
  if (!o.stage.empty()) {
    const auto stage = parse_stage(o.stage);
    if (!stage) throw UsageError("--stage: expected pretrain or sft, got '" + o.stage + "'");
    cfg.train.stage = *stage;
  }
  if (o.half_split) cfg.train.half_split = true;
  cfg.validate();

  std::optional<Parameters> initial;
  if (!o.init.empty()) initial = load_checkpoint(o.init, cfg.model).params;
  const auto dataset = generate_dataset(cfg.data);
  const StageResult result = run_stage(cfg.train, cfg.model, dataset, std::move(initial));
  const RunArtifacts a = write_run(o.out, cfg, result);

  const MetricsRecord& last = result.metrics.back();
  out << "stage=" << to_string(cfg.train.stage) << " steps=" << result.metrics.size()
      << " l_text=" << last.l_text << " l_image=" << last.l_image << '\n'
      << "checkpoint " << a.checkpoint.string() << '\n'
      << "metrics " << a.metrics.string() << '\n'
      << "config " << a.resolved_config.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const auto grid = parse_sweep_grid(o.grid);
  if (!grid) throw UsageError("--grid: expected alpha, ratio or lossfn, got '" + o.grid + "'");
  const RunConfig cfg = load_run_config(o.config);
  const auto rows = run_sweep(cfg, *grid, o.out);
  out << comparison_csv(*grid, rows);
  return kExitOk;
}

std::vector<MultimodalSample> read_for_model(const std::string& path, const ModelConfig& model) {
  DatasetSpec spec;
  spec.image_side = model.image_side;
  spec.channels = model.channels;
  return read_dataset(path, spec);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  const auto samples = read_for_model(o.data, ckpt.model);
  const EvalReport r = evaluate(ckpt.params, samples, ckpt.model, ckpt.train.hybrid().image);
  out << r.to_json().dump(2) << '\n';
  return kExitOk;
}

int cmd_attn_map(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  const auto samples = read_for_model(o.data, ckpt.model);
  auto it = std::find_if(samples.begin(), samples.end(),
                         [&](const MultimodalSample& s) { return s.index == o.index; });
  if (it == samples.end()) throw UsageError("--index: no sample with index " + std::to_string(o.index));
  const auto layers = parse_layers(o.layers, ckpt.model.n_layers);

  Tape tape;
  ParamBinder binder(tape, ckpt.params, false);
  const SampleForward f = forward_sample(binder, *it, ModeLabel::Llava, ckpt.model);
  if (o.query_pos < 0 || o.query_pos >= f.output.layout.total) {
    throw UsageError("--query-pos: " + std::to_string(o.query_pos) + " outside [0," +
                     std::to_string(f.output.layout.total) + ")");
  }
  for (int layer : layers) {
    const AttentionFlowMap map = attention_flow(f.output, o.query_pos, layer, ckpt.model);
    const HeatmapFiles files = write_heatmap(map, o.out);
    out << "layer " << layer << ": " << files.pgm.string() << ' ' << files.csv.string() << ' '
        << files.json.string() << '\n';
  }
  return kExitOk;
}

void summarize(const std::vector<GradcheckCase>& cases, std::ostream& out) {
  std::map<std::string, double> worst;
  for (const auto& c : cases) worst[c.name] = std::max(worst[c.name], c.report.max_rel_error);
  for (const auto& [name, err] : worst) {
    out << (err < kGradTolerance ? "ok   " : "FAIL ") << std::left << std::setw(36) << name
        << " max_rel_error=" << std::scientific << std::setprecision(3) << err << std::defaultfloat
        << '\n';
  }
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_run_config(o.config);
  cfg.validate();
  auto cases = op_gradcheck_suite(kGradSeeds, cfg.train.seed);
  summarize(cases, out);
  if (o.full) {
    // The end-to-end check runs on the reduced d=16 model; on the default
    // model twenty seeds of central differences take well over ten minutes.
    const auto hybrid = hybrid_gradcheck_suite(kGradSeeds, cfg.train.seed);
    summarize(hybrid, out);
    cases.insert(cases.end(), hybrid.begin(), hybrid.end());
  }
  const double w = worst_error(cases);
  out << "cases=" << cases.size() << " worst=" << std::scientific << w << std::defaultfloat << '\n';
  return w < kGradTolerance ? kExitOk : kExitCheckFailed;
}

int cmd_inspect_ckpt(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  out << checkpoint_header_json(o.ckpt) << '\n';
  for (const auto& [name, t] : ckpt.params) {
    out << name << ' ' << t.rows() << 'x' << t.cols() << '\n';
  }
  out << "parameters " << parameter_count(ckpt.params) << '\n';
  const auto diff = diff_against_defaults(ckpt.model, ckpt.train);
  out << "differs from defaults:" << (diff.empty() ? " none" : "") << '\n';
  for (const auto& line : diff) out << "  " << line << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"vdep: toy multimodal pre-training with hidden-state image supervision"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "write a .vdsl dataset from a config's data section");
  gen->add_option("--spec", o.spec, "run config file")->required();
  gen->add_option("--out", o.out, "output .vdsl path")->required();

  auto* train = app.add_subcommand("train", "run one training stage");
  train->add_option("--config", o.config, "run config file")->required();
  train->add_option("--out", o.out, "output directory")->required();
  train->add_option("--seed", o.seed, "training seed")->required();
  train->add_option("--stage", o.stage, "pretrain or sft");
  train->add_option("--init", o.init, "initial checkpoint (required for sft)");
  train->add_flag("--half-split", o.half_split, "split every batch half/half between modes");

  auto* sweep = app.add_subcommand("sweep", "ablation grid with a shared seed");
  sweep->add_option("--config", o.config, "run config file")->required();
  sweep->add_option("--grid", o.grid, "alpha, ratio or lossfn")->required();
  sweep->add_option("--out", o.out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "caption accuracy and reconstruction probe");
  eval->add_option("--ckpt", o.ckpt, "checkpoint")->required();
  eval->add_option("--data", o.data, ".vdsl dataset")->required();

  auto* attn = app.add_subcommand("attn-map", "attention-flow heatmaps onto the patch grid");
  attn->add_option("--ckpt", o.ckpt, "checkpoint")->required();
  attn->add_option("--data", o.data, ".vdsl dataset")->required();
  attn->add_option("--index", o.index, "sample index")->required();
  attn->add_option("--query-pos", o.query_pos, "query position in the sequence")->required();
  attn->add_option("--layers", o.layers, "'all' or a comma-separated list");
  attn->add_option("--out", o.out, "output path prefix")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--config", o.config, "run config file")->required();
  grad->add_flag("--full", o.full, "also check the end-to-end hybrid loss");

  auto* inspect = app.add_subcommand("inspect-ckpt", "print a checkpoint's header and tensors");
  inspect->add_option("--ckpt", o.ckpt, "checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (attn->parsed()) return cmd_attn_map(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
    if (inspect->parsed()) return cmd_inspect_ckpt(o, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace vdep
