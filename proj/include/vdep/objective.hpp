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

#include "vdep/model.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace vdep {

enum class LossVariant { L2, InverseL2, SigmoidL2 };
std::string_view to_string(LossVariant v);
std::optional<LossVariant> parse_loss_variant(std::string_view s);

struct ImageLossConfig {
  LossVariant variant = LossVariant::L2;
  double epsilon = 1e-6;  // InverseL2 guard, must be > 0
  int offset = 1;         // 1: next-embedding prediction, 0: same position
  bool detach_target = true;
};

struct SupervisionMasks {
  // text_mask[p] is true when the logit at p is supervised with token p + 1
  std::vector<bool> text_mask;
  // (hidden-state position, patch index) pairs
  std::vector<std::pair<Index, Index>> image_pairs;
};

/// Llava mode supervises the response tokens through the LM head; Vdep mode
/// supervises hidden states at image positions against the image embeddings.
SupervisionMasks supervision_masks(const SequenceLayout& layout, ModeLabel mode, int offset);

/// targets[p] = token_ids[p + 1]; the last position gets <pad>.
std::vector<int> next_token_targets(std::span<const int> token_ids);

/// base m = mean squared error over paired rows; returns m, 1/(m+eps) or
/// sigmoid(m). With detach_target the target rows enter as constants.
Var image_alignment_loss(const Var& hidden_rows, const Var& target_rows, const ImageLossConfig& cfg);

/// Scalar form of the three variants, for tests and reports.
double apply_loss_variant(double m, LossVariant variant, double epsilon);

struct LossBreakdown {
  double l_text = 0.0;
  double l_image = 0.0;
  double total = 0.0;
  std::size_t text_position_count = 0;
  std::size_t image_position_count = 0;
  double alpha_used = 0.0;
};

struct HybridLoss {
  Var total;
  Var l_text;
  Var l_image;
  LossBreakdown breakdown;
};

struct HybridConfig {
  double alpha = 0.001;
  ImageLossConfig image;
};

/// total = l_text + alpha * l_image, where l_text pools the masked CE over
/// all Llava-mode samples and l_image pools the alignment loss over all
/// Vdep-mode samples. A mode absent from the batch contributes 0 with count 0.
HybridLoss hybrid_loss(std::span<const SampleForward> batch, const HybridConfig& cfg);

}  // namespace vdep
