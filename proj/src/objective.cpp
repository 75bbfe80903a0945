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

#include "vdep/objective.hpp"

#include "vdep/errors.hpp"
#include "vdep/kernels.hpp"

#include <cmath>

namespace vdep {

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::L2:
      return "l2";
    case LossVariant::InverseL2:
      return "inverse_l2";
    case LossVariant::SigmoidL2:
      return "sigmoid_l2";
  }
  return "l2";
}

std::optional<LossVariant> parse_loss_variant(std::string_view s) {
  if (s == "l2" || s == "L2") return LossVariant::L2;
  if (s == "inverse_l2" || s == "1/L2") return LossVariant::InverseL2;
  if (s == "sigmoid_l2" || s == "Sigmoid(L2)") return LossVariant::SigmoidL2;
  return std::nullopt;
}

SupervisionMasks supervision_masks(const SequenceLayout& L, ModeLabel mode, int offset) {
  if (offset != 0 && offset != 1) throw DomainError("supervision_masks: offset must be 0 or 1");
  SupervisionMasks m;
  m.text_mask.assign(static_cast<std::size_t>(L.total), false);
  if (mode == ModeLabel::Llava) {
    for (Index tok = L.response_begin; tok < L.response_end; ++tok) {
      if (tok >= 1) m.text_mask[tok - 1] = true;
    }
    return m;
  }
  const Index n = L.image_end - L.image_begin;
  m.image_pairs.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) m.image_pairs.emplace_back(L.image_begin + j - offset, j);
  return m;
}

std::vector<int> next_token_targets(std::span<const int> token_ids) {
  std::vector<int> t(token_ids.size(), token::kPad);
  for (std::size_t p = 0; p + 1 < token_ids.size(); ++p) t[p] = token_ids[p + 1];
  return t;
}

double apply_loss_variant(double m, LossVariant variant, double epsilon) {
  switch (variant) {
    case LossVariant::L2:
      return m;
    case LossVariant::InverseL2:
      return 1.0 / (m + epsilon);
    case LossVariant::SigmoidL2:
      return kernels::sigmoid(m);
  }
  return m;
}

Var image_alignment_loss(const Var& hidden_rows, const Var& target_rows, const ImageLossConfig& cfg) {
  if (hidden_rows.rows() != target_rows.rows() || hidden_rows.cols() != target_rows.cols()) {
    throw DimensionError("image_alignment_loss: hidden " + std::to_string(hidden_rows.rows()) + "x" +
                         std::to_string(hidden_rows.cols()) + " vs targets " +
                         std::to_string(target_rows.rows()) + "x" +
                         std::to_string(target_rows.cols()));
  }
  if (cfg.epsilon <= 0.0) throw DomainError("image_alignment_loss: epsilon must be > 0");
  Tape& tape = hidden_rows.tape();
  const Var target = cfg.detach_target ? tape.constant(target_rows.value()) : target_rows;
  const std::vector<bool> all(static_cast<std::size_t>(hidden_rows.rows()), true);
  const Var m = masked_mean_squared_error(hidden_rows, target, all).value;
  switch (cfg.variant) {
    case LossVariant::L2:
      return m;
    case LossVariant::InverseL2:
      return reciprocal(m, cfg.epsilon);
    case LossVariant::SigmoidL2:
      return sigmoid(m);
  }
  return m;
}

HybridLoss hybrid_loss(std::span<const SampleForward> batch, const HybridConfig& cfg) {
  if (cfg.alpha < 0.0 || !std::isfinite(cfg.alpha)) throw DomainError("hybrid_loss: alpha must be >= 0");
  if (batch.empty()) throw DomainError("hybrid_loss: empty batch");
  Tape& tape = batch.front().output.logits.tape();

  std::optional<Var> text_sum;
  std::optional<Var> image_sum;
  std::size_t text_count = 0;
  std::size_t image_count = 0;

  for (const SampleForward& s : batch) {
    const SupervisionMasks masks = supervision_masks(s.output.layout, s.mode, cfg.image.offset);
    if (s.mode == ModeLabel::Llava) {
      const auto targets = next_token_targets(s.sequence.token_ids);
      MaskedLoss ce = cross_entropy_masked(s.output.logits, targets, masks.text_mask);
      if (ce.count == 0) continue;
      Var weighted = scale(ce.value, static_cast<double>(ce.count));
      text_sum = text_sum ? add(*text_sum, weighted) : weighted;
      text_count += ce.count;
    } else {
      if (masks.image_pairs.empty()) continue;
      std::vector<Index> hidden_pos;
      std::vector<Index> patch_idx;
      for (const auto& [h, j] : masks.image_pairs) {
        hidden_pos.push_back(h);
        patch_idx.push_back(j);
      }
      Var h_rows = gather_rows(s.output.hidden, hidden_pos);
      Var t_rows = gather_rows(s.image_embeddings, patch_idx);
      Var li = image_alignment_loss(h_rows, t_rows, cfg.image);
      Var weighted = scale(li, static_cast<double>(hidden_pos.size()));
      image_sum = image_sum ? add(*image_sum, weighted) : weighted;
      image_count += hidden_pos.size();
    }
  }

  Matrix zero = Matrix::Zero(1, 1);
  HybridLoss out;
  out.l_text = text_sum ? scale(*text_sum, 1.0 / static_cast<double>(text_count)) : tape.constant(zero);
  out.l_image =
      image_sum ? scale(*image_sum, 1.0 / static_cast<double>(image_count)) : tape.constant(zero);
  out.total = add(out.l_text, scale(out.l_image, cfg.alpha));

  out.breakdown.l_text = out.l_text.item();
  out.breakdown.l_image = out.l_image.item();
  out.breakdown.total = out.total.item();
  out.breakdown.text_position_count = text_count;
  out.breakdown.image_position_count = image_count;
  out.breakdown.alpha_used = cfg.alpha;
  if (!std::isfinite(out.breakdown.total)) throw NumericError("hybrid_loss: non-finite total");
  return out;
}

}  // namespace vdep
