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

#include "vdep/eval.hpp"

#include "vdep/errors.hpp"

namespace vdep {

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  j["exact_match"] = exact_match;
  j["slot_accuracy"] = {{"shape", shape_accuracy},
                        {"color", color_accuracy},
                        {"row", row_accuracy},
                        {"col", col_accuracy}};
  j["probe"] = {{"accuracy", probe.accuracy}, {"mean_l2", probe.mean_l2}, {"rows", probe.count}};
  j["l_image"] = l_image;
  return j;
}

ProbeReport grouped_probe(const Parameters& params, std::span<const MultimodalSample> samples,
                          const ModelConfig& model, const ImageLossConfig& image_cfg,
                          std::size_t group) {
  if (group < 1) throw DomainError("probe group must be >= 1");
  ProbeReport total;
  double acc_weighted = 0.0;
  double l2_weighted = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += group) {
    const auto chunk = samples.subspan(start, std::min(group, samples.size() - start));
    const AlignmentPairs pairs = collect_alignment_pairs(params, chunk, model, image_cfg);
    const ProbeReport r = reconstruction_probe(pairs.targets, pairs.hidden);
    acc_weighted += r.accuracy * static_cast<double>(r.count);
    l2_weighted += r.mean_l2 * static_cast<double>(r.count);
    total.count += r.count;
  }
  if (total.count > 0) {
    total.accuracy = acc_weighted / static_cast<double>(total.count);
    total.mean_l2 = l2_weighted / static_cast<double>(total.count);
  }
  return total;
}

EvalReport evaluate(const Parameters& params, std::span<const MultimodalSample> samples,
                    const ModelConfig& model, const ImageLossConfig& image_cfg,
                    std::size_t probe_group) {
  EvalReport r;
  r.samples = samples.size();
  if (samples.empty()) return r;
  std::size_t exact = 0, shape = 0, color = 0, row = 0, col = 0;
  for (const auto& s : samples) {
    const auto out = greedy_caption(params, s, model, s.response.size());
    exact += out == s.response ? 1 : 0;
    shape += out[0] == s.response[0] ? 1 : 0;
    color += out[1] == s.response[1] ? 1 : 0;
    row += out[3] == s.response[3] ? 1 : 0;
    col += out[4] == s.response[4] ? 1 : 0;
  }
  const double n = static_cast<double>(samples.size());
  r.exact_match = static_cast<double>(exact) / n;
  r.shape_accuracy = static_cast<double>(shape) / n;
  r.color_accuracy = static_cast<double>(color) / n;
  r.row_accuracy = static_cast<double>(row) / n;
  r.col_accuracy = static_cast<double>(col) / n;
  r.probe = grouped_probe(params, samples, model, image_cfg, probe_group);
  r.l_image = collect_alignment_pairs(params, samples, model, image_cfg).l_image;
  return r;
}

}  // namespace vdep
