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

#include "vdep/model.hpp"

#include "vdep/errors.hpp"

#include <random>

namespace vdep {

namespace {

constexpr double kNormEps = 1e-5;
constexpr int kMlpRatio = 4;

void add_block(Parameters& p, const std::string& prefix, int d, std::mt19937_64& rng, double std) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto weight = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = std * normal(rng);
    return Tensor(std::move(m), true);
  };
  auto zeros = [](Index c) { return Tensor(Matrix::Zero(1, c), true); };
  auto ones = [](Index c) { return Tensor(Matrix::Ones(1, c), true); };

  p[prefix + ".ln1.gain"] = ones(d);
  p[prefix + ".ln1.bias"] = zeros(d);
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    p[prefix + ".attn." + w + ".weight"] = weight(d, d);
    // A key bias shifts every score of a query equally and has no effect.
    if (std::string_view(w) != "wk") p[prefix + ".attn." + w + ".bias"] = zeros(d);
  }
  p[prefix + ".ln2.gain"] = ones(d);
  p[prefix + ".ln2.bias"] = zeros(d);
  p[prefix + ".mlp.fc1.weight"] = weight(d, kMlpRatio * d);
  p[prefix + ".mlp.fc1.bias"] = zeros(kMlpRatio * d);
  p[prefix + ".mlp.fc2.weight"] = weight(kMlpRatio * d, d);
  p[prefix + ".mlp.fc2.bias"] = zeros(d);
}

struct BlockTrace {
  Var out;
  std::vector<Matrix> attention;
};

BlockTrace run_block(ParamBinder& P, const std::string& prefix, const Var& x, int n_heads,
                     bool causal) {
  Var h = layer_norm(x, P(prefix + ".ln1.gain"), P(prefix + ".ln1.bias"), kNormEps);
  Var q = linear(h, P(prefix + ".attn.wq.weight"), P(prefix + ".attn.wq.bias"));
  Var k = matmul(h, P(prefix + ".attn.wk.weight"));
  Var v = linear(h, P(prefix + ".attn.wv.weight"), P(prefix + ".attn.wv.bias"));
  AttentionResult att = multi_head_attention(q, k, v, n_heads, causal);
  Var o = linear(att.out, P(prefix + ".attn.wo.weight"), P(prefix + ".attn.wo.bias"));
  Var r = add(x, o);
  Var m = layer_norm(r, P(prefix + ".ln2.gain"), P(prefix + ".ln2.bias"), kNormEps);
  m = gelu(linear(m, P(prefix + ".mlp.fc1.weight"), P(prefix + ".mlp.fc1.bias")));
  m = linear(m, P(prefix + ".mlp.fc2.weight"), P(prefix + ".mlp.fc2.bias"));
  return {add(r, m), std::move(att.weights)};
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model.") + name + ": must be positive");
  };
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(vocab_size, "vocab_size");
  positive(image_side, "image_side");
  positive(channels, "channels");
  positive(patch_size, "patch_size");
  positive(max_seq_len, "max_seq_len");
  positive(projector_hidden, "projector_hidden");
  if (vision_layers < 0) throw ConfigError("model.vision_layers: must be >= 0");
  if (image_side % patch_size != 0) {
    throw ConfigError("model.patch_size: image_side must be divisible by patch_size");
  }
  if (d_model % n_heads != 0) throw ConfigError("model.n_heads: d_model must be divisible by n_heads");
}

std::string_view to_string(ModeLabel m) { return m == ModeLabel::Vdep ? "vdep" : "llava"; }

Parameters init_parameters(const ModelConfig& c, std::uint64_t seed, double init_std) {
  c.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto weight = [&](Index r, Index cols) {
    Matrix m(r, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = init_std * normal(rng);
    return Tensor(std::move(m), true);
  };
  const int d = c.d_model;

  // Insertion order fixes the RNG stream; the map itself sorts by name.
  Parameters p;
  p["vision.patch_embed.weight"] = weight(c.patch_dim(), d);
  p["vision.patch_embed.bias"] = Tensor(Matrix::Zero(1, d), true);
  p["vision.pos_embed"] = weight(c.n_patches(), d);
  for (int i = 0; i < c.vision_layers; ++i) {
    add_block(p, "vision.block" + std::to_string(i), d, rng, init_std);
  }
  p["vision.ln_post.gain"] = Tensor(Matrix::Ones(1, d), true);
  p["vision.ln_post.bias"] = Tensor(Matrix::Zero(1, d), true);
  p["projector.fc1.weight"] = weight(d, c.projector_hidden);
  p["projector.fc1.bias"] = Tensor(Matrix::Zero(1, c.projector_hidden), true);
  p["projector.fc2.weight"] = weight(c.projector_hidden, d);
  p["projector.fc2.bias"] = Tensor(Matrix::Zero(1, d), true);

  p["llm.tok_embed"] = weight(c.vocab_size, d);
  p["llm.pos_embed"] = weight(c.max_seq_len, d);
  for (int i = 0; i < c.n_layers; ++i) add_block(p, "llm.block" + std::to_string(i), d, rng, init_std);
  p["llm.ln_f.gain"] = Tensor(Matrix::Ones(1, d), true);
  p["llm.ln_f.bias"] = Tensor(Matrix::Zero(1, d), true);
  p["llm.lm_head.weight"] = weight(d, c.vocab_size);
  return p;
}

std::size_t parameter_count(const Parameters& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += static_cast<std::size_t>(t.size());
  return n;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  auto p = params_.find(name);
  if (p == params_.end()) throw IndexError("unknown parameter '" + name + "'");
  Var v = track_grad_ ? tape_.leaf(p->second) : tape_.constant(p->second.data());
  bound_.emplace(name, v);
  return v;
}

void ParamBinder::bind(const std::string& name, const Var& v) {
  if (!params_.contains(name)) throw IndexError("unknown parameter '" + name + "'");
  bound_.insert_or_assign(name, v);
}

// ---------------------------------------------------------------------------

PatchGrid patchify(std::span<const double> image, const ModelConfig& c) {
  const std::size_t expected = static_cast<std::size_t>(c.image_side) * c.image_side * c.channels;
  if (image.size() != expected) {
    throw DimensionError("patchify: image has " + std::to_string(image.size()) + " values, expected " +
                         std::to_string(expected));
  }
  const int g = c.grid_side();
  const int ps = c.patch_size;
  PatchGrid grid{Matrix(c.n_patches(), c.patch_dim()), g, g};
  for (int pr = 0; pr < g; ++pr) {
    for (int pc = 0; pc < g; ++pc) {
      Index col = 0;
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          const std::size_t base =
              (static_cast<std::size_t>(pr * ps + y) * c.image_side + (pc * ps + x)) * c.channels;
          for (int ch = 0; ch < c.channels; ++ch) grid.patches(pr * g + pc, col++) = image[base + ch];
        }
      }
    }
  }
  return grid;
}

std::vector<double> unpatchify(const PatchGrid& grid, const ModelConfig& c) {
  if (grid.patches.rows() != c.n_patches() || grid.patches.cols() != c.patch_dim()) {
    throw DimensionError("unpatchify: patch grid does not match config");
  }
  const int g = c.grid_side();
  const int ps = c.patch_size;
  std::vector<double> image(static_cast<std::size_t>(c.image_side) * c.image_side * c.channels);
  for (int pr = 0; pr < g; ++pr) {
    for (int pc = 0; pc < g; ++pc) {
      Index col = 0;
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          const std::size_t base =
              (static_cast<std::size_t>(pr * ps + y) * c.image_side + (pc * ps + x)) * c.channels;
          for (int ch = 0; ch < c.channels; ++ch) image[base + ch] = grid.patches(pr * g + pc, col++);
        }
      }
    }
  }
  return image;
}

Var encode_and_project(ParamBinder& P, const PatchGrid& patches, const ModelConfig& c) {
  if (patches.patches.rows() != c.n_patches() || patches.patches.cols() != c.patch_dim()) {
    throw DimensionError("encode_and_project: patches are " + std::to_string(patches.patches.rows()) +
                         "x" + std::to_string(patches.patches.cols()) + ", expected " +
                         std::to_string(c.n_patches()) + "x" + std::to_string(c.patch_dim()));
  }
  Tape& tape = P.tape();
  Var x = linear(tape.constant(patches.patches), P("vision.patch_embed.weight"),
                 P("vision.patch_embed.bias"));
  x = add(x, P("vision.pos_embed"));
  for (int i = 0; i < c.vision_layers; ++i) {
    x = run_block(P, "vision.block" + std::to_string(i), x, c.n_heads, /*causal=*/false).out;
  }
  x = layer_norm(x, P("vision.ln_post.gain"), P("vision.ln_post.bias"), kNormEps);
  x = gelu(linear(x, P("projector.fc1.weight"), P("projector.fc1.bias")));
  return linear(x, P("projector.fc2.weight"), P("projector.fc2.bias"));
}

AssembledSequence assemble_sequence(ParamBinder& P, std::span<const int> prompt,
                                    std::span<const int> response, const Var& image_embeddings,
                                    ModeLabel mode, const ModelConfig& c) {
  const Index n_img = image_embeddings.rows();
  if (n_img != c.n_patches() || image_embeddings.cols() != c.d_model) {
    throw DimensionError("assemble_sequence: image embeddings must be " +
                         std::to_string(c.n_patches()) + "x" + std::to_string(c.d_model));
  }
  AssembledSequence seq;
  SequenceLayout& L = seq.layout;
  L.bos = 0;
  L.mode_token = 1;
  L.image_begin = 2;
  L.image_end = L.image_begin + n_img;
  L.prompt_begin = L.image_end;
  L.prompt_end = L.prompt_begin + static_cast<Index>(prompt.size());
  L.response_begin = L.prompt_end;
  L.response_end = L.response_begin + static_cast<Index>(response.size());
  L.eos = L.response_end;
  L.total = L.eos + 1;
  if (L.total > c.max_seq_len) {
    throw DimensionError("assemble_sequence: length " + std::to_string(L.total) +
                         " exceeds max_seq_len " + std::to_string(c.max_seq_len));
  }

  const int mode_id = mode == ModeLabel::Vdep ? token::kAutoImage : token::kImage;
  std::vector<int> head = {token::kBos, mode_id};
  std::vector<int> tail(prompt.begin(), prompt.end());
  tail.insert(tail.end(), response.begin(), response.end());
  tail.push_back(token::kEos);

  seq.token_ids = head;
  seq.token_ids.insert(seq.token_ids.end(), static_cast<std::size_t>(n_img), token::kPad);
  seq.token_ids.insert(seq.token_ids.end(), tail.begin(), tail.end());

  Var table = P("llm.tok_embed");
  Var parts[] = {embedding_lookup(table, head), image_embeddings, embedding_lookup(table, tail)};
  seq.embeddings = concat_rows(parts);
  return seq;
}

ForwardOutput forward(ParamBinder& P, const AssembledSequence& seq, const ModelConfig& c) {
  const Var& inputs = seq.embeddings;
  if (inputs.cols() != c.d_model) {
    throw DimensionError("forward: input width " + std::to_string(inputs.cols()) + " != d_model " +
                         std::to_string(c.d_model));
  }
  if (inputs.rows() > c.max_seq_len) throw DimensionError("forward: sequence longer than max_seq_len");
  ForwardOutput out;
  out.layout = seq.layout;
  Var x = add(inputs, slice_rows(P("llm.pos_embed"), 0, inputs.rows()));
  out.attention.reserve(c.n_layers);
  for (int i = 0; i < c.n_layers; ++i) {
    BlockTrace b = run_block(P, "llm.block" + std::to_string(i), x, c.n_heads, /*causal=*/true);
    x = b.out;
    out.attention.push_back(std::move(b.attention));
  }
  out.hidden = layer_norm(x, P("llm.ln_f.gain"), P("llm.ln_f.bias"), kNormEps);
  out.logits = matmul(out.hidden, P("llm.lm_head.weight"));
  return out;
}

SampleForward forward_sample(ParamBinder& P, const MultimodalSample& sample, ModeLabel mode,
                             const ModelConfig& c) {
  SampleForward f;
  f.mode = mode;
  f.image_embeddings = encode_and_project(P, patchify(sample.image, c), c);
  f.sequence = assemble_sequence(P, sample.prompt, sample.response, f.image_embeddings, mode, c);
  f.output = forward(P, f.sequence, c);
  return f;
}

std::vector<int> greedy_caption(const Parameters& params, const MultimodalSample& sample,
                                const ModelConfig& c, std::size_t length) {
  const PatchGrid patches = patchify(sample.image, c);
  std::vector<int> generated;
  for (std::size_t k = 0; k < length; ++k) {
    Tape tape;
    ParamBinder P(tape, params, /*track_grad=*/false);
    Var img = encode_and_project(P, patches, c);
    AssembledSequence seq = assemble_sequence(P, sample.prompt, generated, img, ModeLabel::Llava, c);
    ForwardOutput out = forward(P, seq, c);
    // The last generated token (or the prompt) predicts the next one.
    const Index at = seq.layout.response_end - 1;
    Index best = 0;
    out.logits.value().row(at).maxCoeff(&best);
    generated.push_back(static_cast<int>(best));
  }
  return generated;
}

}  // namespace vdep
