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

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace vdep {

enum class Stage { Pretrain, Sft };
std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

struct TrainConfig {
  double alpha = 0.001;
  double data_ratio = 1.0;
  LossVariant loss_variant = LossVariant::L2;
  double inverse_epsilon = 1e-6;
  int offset = 1;
  bool detach_target = true;
  std::size_t batch_size = 16;
  std::size_t steps = 300;
  double lr = 1e-3;      // pre-training peak
  double sft_lr = 2e-5;  // fine-tuning peak
  double warmup_fraction = 0.03;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  Stage stage = Stage::Pretrain;
  // Hard half/half split of every batch instead of the ratio plan.
  bool half_split = false;

  void validate() const;
  HybridConfig hybrid() const;
  double peak_lr() const { return stage == Stage::Sft ? sft_lr : lr; }

  bool operator==(const TrainConfig&) const = default;
};

struct PlanEntry {
  std::size_t index = 0;
  ModeLabel mode = ModeLabel::Llava;
  bool operator==(const PlanEntry&) const = default;
};

struct EpochPlan {
  std::vector<PlanEntry> entries;
  std::size_t count(ModeLabel m) const;
};

using EpochRng = std::mt19937_64;

/// Every index once in Llava mode plus round(r * N) distinct indices in Vdep
/// mode, shuffled together.
EpochPlan build_epoch_plan(std::size_t n, double ratio, EpochRng& rng);

/// Shuffled indices cut into batches; each batch puts a random half
/// (floor(B/2)) in Vdep mode and the rest in Llava mode.
EpochPlan build_half_split_plan(std::size_t n, std::size_t batch_size, EpochRng& rng);

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

/// Linear warmup to lr over warmup_fraction * total steps, then cosine decay
/// to zero at step == total.
double lr_schedule(std::size_t step, std::size_t total, double lr, double warmup_fraction);

/// Decoupled weight decay Adam.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit AdamW(const Parameters& params);
  AdamW(const Parameters& params, Options opts);

  void step(Parameters& params, const std::map<std::string, Matrix>& grads, double lr);
  std::size_t steps_taken() const { return step_; }

 private:
  Options opts_;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
  std::size_t step_ = 0;
};

/// Scales all gradients so their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(std::map<std::string, Matrix>& grads, double max_norm);

struct StepResult {
  LossBreakdown loss;
  std::map<std::string, Matrix> grads;
};

/// Forward + hybrid loss + backward for one batch, no parameter update.
StepResult compute_gradients(std::span<const PlanEntry> batch,
                             std::span<const MultimodalSample> dataset, const Parameters& params,
                             const ModelConfig& model, const TrainConfig& cfg);

/// One optimizer step. Throws NumericError on a non-finite loss or gradient.
LossBreakdown train_step(std::span<const PlanEntry> batch, std::span<const MultimodalSample> dataset,
                         Parameters& params, AdamW& optimizer, const ModelConfig& model,
                         const TrainConfig& cfg, double lr);

struct MetricsRecord {
  std::size_t step = 0;
  double l_text = 0.0;
  double l_image = 0.0;
  double total = 0.0;
  double lr = 0.0;
  std::size_t vdep_samples = 0;
  std::size_t llava_samples = 0;

  std::string to_json_line() const;
};

struct StageResult {
  Parameters params;
  std::vector<MetricsRecord> metrics;
};

using StepCallback = std::function<void(std::size_t step, const Parameters&)>;

/// Runs a whole stage. Pretrain starts from fresh parameters when none are
/// given; Sft requires initial parameters and trains text-only at sft_lr.
StageResult run_stage(const TrainConfig& cfg, const ModelConfig& model,
                      std::span<const MultimodalSample> dataset,
                      std::optional<Parameters> initial = std::nullopt,
                      const StepCallback& on_step = nullptr);

std::string metrics_log(std::span<const MetricsRecord> records);

}  // namespace vdep
