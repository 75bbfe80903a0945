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

#include "vdep/trainer.hpp"

#include "vdep/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace vdep {

std::string_view to_string(Stage s) { return s == Stage::Sft ? "sft" : "pretrain"; }

std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "sft") return Stage::Sft;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("train.alpha: must be >= 0");
  if (!(data_ratio >= 0.0 && data_ratio <= 1.0)) throw ConfigError("train.data_ratio: must lie in [0, 1]");
  if (!(inverse_epsilon > 0.0)) throw ConfigError("train.inverse_epsilon: must be > 0");
  if (offset != 0 && offset != 1) throw ConfigError("train.offset: must be 0 or 1");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (steps < 1) throw ConfigError("train.steps: must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr: must be > 0");
  if (!(sft_lr > 0.0)) throw ConfigError("train.sft_lr: must be > 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("train.warmup_fraction: must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be >= 0");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip: must be > 0");
}

HybridConfig TrainConfig::hybrid() const {
  HybridConfig h;
  h.alpha = alpha;
  h.image.variant = loss_variant;
  h.image.epsilon = inverse_epsilon;
  h.image.offset = offset;
  h.image.detach_target = detach_target;
  return h;
}

// ---------------------------------------------------------------------------

std::size_t EpochPlan::count(ModeLabel m) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [m](const PlanEntry& e) { return e.mode == m; }));
}

EpochPlan build_epoch_plan(std::size_t n, double ratio, EpochRng& rng) {
  if (n < 1) throw DomainError("build_epoch_plan: N must be >= 1");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("build_epoch_plan: ratio must lie in [0, 1]");
  const auto extra = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  EpochPlan plan;
  plan.entries.reserve(n + extra);
  for (std::size_t i = 0; i < n; ++i) plan.entries.push_back({i, ModeLabel::Llava});

  // Partial Fisher-Yates: the first `extra` slots become a uniform sample
  // without replacement.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < extra; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
    plan.entries.push_back({pool[i], ModeLabel::Vdep});
  }
  std::shuffle(plan.entries.begin(), plan.entries.end(), rng);
  return plan;
}

EpochPlan build_half_split_plan(std::size_t n, std::size_t batch_size, EpochRng& rng) {
  if (n < 1) throw DomainError("build_half_split_plan: N must be >= 1");
  if (batch_size < 1) throw DomainError("build_half_split_plan: batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochPlan plan;
  plan.entries.reserve(n);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    std::vector<ModeLabel> modes(len, ModeLabel::Llava);
    std::fill_n(modes.begin(), len / 2, ModeLabel::Vdep);
    std::shuffle(modes.begin(), modes.end(), rng);
    for (std::size_t i = 0; i < len; ++i) plan.entries.push_back({order[start + i], modes[i]});
  }
  return plan;
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return sample_seed(seed ^ 0x5EEDBA5EULL, epoch);
}

double lr_schedule(std::size_t step, std::size_t total, double lr, double warmup_fraction) {
  const double warm = warmup_fraction * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s < warm) return lr * s / warm;
  const double span = static_cast<double>(total) - warm;
  if (span <= 0.0) return 0.0;
  const double progress = std::min(1.0, (s - warm) / span);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------

AdamW::AdamW(const Parameters& params) : AdamW(params, Options{}) {}

AdamW::AdamW(const Parameters& params, Options opts) : opts_(opts) {
  for (const auto& [name, t] : params) {
    m_[name] = Matrix::Zero(t.rows(), t.cols());
    v_[name] = Matrix::Zero(t.rows(), t.cols());
  }
}

void AdamW::step(Parameters& params, const std::map<std::string, Matrix>& grads, double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
  for (auto& [name, t] : params) {
    auto g = grads.find(name);
    Matrix& m = m_.at(name);
    Matrix& v = v_.at(name);
    if (g != grads.end()) {
      m = opts_.beta1 * m + (1.0 - opts_.beta1) * g->second;
      v = opts_.beta2 * v + (1.0 - opts_.beta2) * g->second.cwiseProduct(g->second);
    } else {
      m *= opts_.beta1;
      v *= opts_.beta2;
    }
    if (opts_.weight_decay > 0.0) t.data() *= (1.0 - lr * opts_.weight_decay);
    t.data().array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opts_.eps);
  }
}

double clip_global_norm(std::map<std::string, Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads) g *= s;
  }
  return norm;
}

StepResult compute_gradients(std::span<const PlanEntry> batch,
                             std::span<const MultimodalSample> dataset, const Parameters& params,
                             const ModelConfig& model, const TrainConfig& cfg) {
  if (batch.empty()) throw DomainError("train_step: empty batch");
  Tape tape;
  ParamBinder P(tape, params);
  std::vector<SampleForward> forwards;
  forwards.reserve(batch.size());
  for (const PlanEntry& e : batch) {
    if (e.index >= dataset.size()) throw IndexError("train_step: sample index out of range");
    forwards.push_back(forward_sample(P, dataset[e.index], e.mode, model));
  }
  HybridLoss loss = hybrid_loss(forwards, cfg.hybrid());
  tape.backward(loss.total);

  StepResult r;
  r.loss = loss.breakdown;
  for (const auto& [name, v] : P.bound()) {
    Matrix g = tape.grad(v);
    if (!g.allFinite()) throw NumericError("non-finite gradient for " + name);
    r.grads.emplace(name, std::move(g));
  }
  return r;
}

LossBreakdown train_step(std::span<const PlanEntry> batch, std::span<const MultimodalSample> dataset,
                         Parameters& params, AdamW& optimizer, const ModelConfig& model,
                         const TrainConfig& cfg, double lr) {
  StepResult r = compute_gradients(batch, dataset, params, model, cfg);
  clip_global_norm(r.grads, cfg.grad_clip);
  optimizer.step(params, r.grads, lr);
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) throw NumericError("parameter " + name + " became non-finite");
  }
  return r.loss;
}

// ---------------------------------------------------------------------------

std::string MetricsRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["l_text"] = l_text;
  j["l_image"] = l_image;
  j["total"] = total;
  j["lr"] = lr;
  j["mode_counts"] = {{"llava", llava_samples}, {"vdep", vdep_samples}};
  return j.dump();
}

std::string metrics_log(std::span<const MetricsRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += r.to_json_line();
    out += '\n';
  }
  return out;
}

StageResult run_stage(const TrainConfig& cfg_in, const ModelConfig& model,
                      std::span<const MultimodalSample> dataset, std::optional<Parameters> initial,
                      const StepCallback& on_step) {
  cfg_in.validate();
  model.validate();
  if (dataset.empty()) throw ConfigError("data: dataset is empty");

  TrainConfig cfg = cfg_in;
  if (cfg.stage == Stage::Sft) {
    if (!initial) throw ConfigError("train.stage: sft requires initial parameters (--init)");
    cfg.data_ratio = 0.0;
    cfg.half_split = false;
  }

  StageResult result;
  result.params = initial ? std::move(*initial) : init_parameters(model, cfg.seed);
  for (auto& [_, t] : result.params) t.set_requires_grad(true);
  AdamW::Options opts;
  opts.weight_decay = cfg.weight_decay;
  AdamW optimizer(result.params, opts);

  const std::size_t n = dataset.size();
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < cfg.steps; ++epoch) {
    EpochRng rng(epoch_seed(cfg.seed, epoch));
    const EpochPlan plan = cfg.half_split ? build_half_split_plan(n, cfg.batch_size, rng)
                                          : build_epoch_plan(n, cfg.data_ratio, rng);
    for (std::size_t start = 0; start < plan.entries.size() && step < cfg.steps;
         start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, plan.entries.size() - start);
      std::span<const PlanEntry> batch(plan.entries.data() + start, len);
      const double lr = lr_schedule(step, cfg.steps, cfg.peak_lr(), cfg.warmup_fraction);
      const LossBreakdown loss = train_step(batch, dataset, result.params, optimizer, model, cfg, lr);

      MetricsRecord rec;
      rec.step = step;
      rec.l_text = loss.l_text;
      rec.l_image = loss.l_image;
      rec.total = loss.total;
      rec.lr = lr;
      for (const PlanEntry& e : batch) {
        (e.mode == ModeLabel::Vdep ? rec.vdep_samples : rec.llava_samples) += 1;
      }
      result.metrics.push_back(rec);
      ++step;
      if (on_step) on_step(step, result.params);
    }
  }
  return result;
}

}  // namespace vdep
