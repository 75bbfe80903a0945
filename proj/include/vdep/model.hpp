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

#include "vdep/autodiff.hpp"
#include "vdep/data.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vdep {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int vocab_size = 22;
  int image_side = 16;
  int channels = 3;
  int patch_size = 4;
  int max_seq_len = 32;
  int projector_hidden = 128;
  int vision_layers = 1;

  int grid_side() const { return image_side / patch_size; }
  int n_patches() const { return grid_side() * grid_side(); }
  int patch_dim() const { return patch_size * patch_size * channels; }

  // Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class ModeLabel { Vdep, Llava };
std::string_view to_string(ModeLabel m);

/// Named parameters, kept sorted by name.
using Parameters = std::map<std::string, Tensor>;

/// Weights ~ 0.02 * N(0, 1), biases zero, norm gains one.
Parameters init_parameters(const ModelConfig& config, std::uint64_t seed, double init_std = 0.02);
std::size_t parameter_count(const Parameters& params);

/// Binds each parameter onto a tape at most once, on first use.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const Parameters& params, bool track_grad = true)
      : tape_(tape), params_(params), track_grad_(track_grad) {}

  Var operator()(const std::string& name);
  // Pre-binds a name to an existing variable, replacing the stored value.
  void bind(const std::string& name, const Var& v);
  Tape& tape() { return tape_; }
  const std::map<std::string, Var>& bound() const { return bound_; }

 private:
  Tape& tape_;
  const Parameters& params_;
  bool track_grad_;
  std::map<std::string, Var> bound_;
};

struct PatchGrid {
  Matrix patches;  // n_patches x patch_dim, reading order
  int grid_rows = 0;
  int grid_cols = 0;
};

/// Non-overlapping tiling of an HWC image. Each patch row is laid out as
/// (row within patch, column within patch, channel).
PatchGrid patchify(std::span<const double> image, const ModelConfig& config);
std::vector<double> unpatchify(const PatchGrid& grid, const ModelConfig& config);

/// Vision encoder plus MLP projector. Recomputed from the current parameters
/// every call; the result is the n_patches x d_model image embedding matrix.
Var encode_and_project(ParamBinder& params, const PatchGrid& patches, const ModelConfig& config);

struct SequenceLayout {
  Index total = 0;
  Index bos = 0;
  Index mode_token = 1;
  Index image_begin = 0;
  Index image_end = 0;
  Index prompt_begin = 0;
  Index prompt_end = 0;
  Index response_begin = 0;
  Index response_end = 0;
  Index eos = 0;

  bool operator==(const SequenceLayout&) const = default;
};

struct AssembledSequence {
  Var embeddings;            // T x d_model, position embeddings not yet added
  SequenceLayout layout;
  std::vector<int> token_ids;  // T entries; image positions hold <pad>
};

/// [bos, mode token, image rows, prompt, response, eos]. The mode token is
/// <auto_image> for Vdep and <image> for Llava.
AssembledSequence assemble_sequence(ParamBinder& params, std::span<const int> prompt,
                                    std::span<const int> response, const Var& image_embeddings,
                                    ModeLabel mode, const ModelConfig& config);

struct ForwardOutput {
  Var hidden;  // final layer after the final norm, T x d_model
  Var logits;  // T x vocab
  // attention[layer][head] is a T x T row-stochastic causal matrix
  std::vector<std::vector<Matrix>> attention;
  SequenceLayout layout;
};

ForwardOutput forward(ParamBinder& params, const AssembledSequence& seq, const ModelConfig& config);

/// Convenience: patchify, encode, assemble and run the decoder for one sample.
struct SampleForward {
  Var image_embeddings;
  AssembledSequence sequence;
  ForwardOutput output;
  ModeLabel mode = ModeLabel::Llava;
};
SampleForward forward_sample(ParamBinder& params, const MultimodalSample& sample, ModeLabel mode,
                             const ModelConfig& config);

/// Greedy decoding of a caption of fixed length (no KV cache).
std::vector<int> greedy_caption(const Parameters& params, const MultimodalSample& sample,
                                const ModelConfig& config, std::size_t length = kCaptionLength);

}  // namespace vdep
