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

#include "vdep/errors.hpp"
#include "vdep/gradcheck.hpp"
#include "vdep/gradcheck_suite.hpp"
#include "vdep/model.hpp"

#include <doctest.h>

#include <random>

using namespace vdep;

namespace {

// Pre-norm block: two norms, q/v/o projections with bias, k without, and a
// 4x MLP.
std::size_t block_params(std::size_t d) {
  return 4 * d + 4 * d * d + 3 * d + (d * 4 * d + 4 * d) + (4 * d * d + d);
}

std::size_t expected_count(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto pd = static_cast<std::size_t>(c.patch_dim());
  const auto np = static_cast<std::size_t>(c.n_patches());
  const auto ph = static_cast<std::size_t>(c.projector_hidden);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  const std::size_t vision = pd * d + d + np * d + c.vision_layers * block_params(d) + 2 * d;
  const std::size_t projector = d * ph + ph + ph * d + d;
  const std::size_t llm = v * d + static_cast<std::size_t>(c.max_seq_len) * d +
                          c.n_layers * block_params(d) + 2 * d + d * v;
  return vision + projector + llm;
}

MultimodalSample sample_for(const ModelConfig& m, std::uint64_t seed) {
  DatasetSpec spec;
  spec.image_side = m.image_side;
  spec.channels = m.channels;
  spec.master_seed = seed;
  spec.size = 4;
  return generate_sample(spec, 1);
}

}  // namespace

TEST_CASE("patchify an 8x8 single-channel image into four 16-value patches") {
  ModelConfig m;
  m.image_side = 8;
  m.channels = 1;
  m.patch_size = 4;
  std::vector<double> img(64);
  for (int i = 0; i < 64; ++i) img[static_cast<std::size_t>(i)] = i;
  const PatchGrid g = patchify(img, m);
  REQUIRE(g.patches.rows() == 4);
  REQUIRE(g.patches.cols() == 16);
  CHECK(g.grid_rows == 2);
  CHECK(g.grid_cols == 2);
  for (int p = 0; p < 4; ++p) {
    const int py = p / 2, px = p % 2;
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        CHECK(g.patches(p, y * 4 + x) == (py * 4 + y) * 8 + px * 4 + x);
      }
    }
  }
  CHECK(unpatchify(g, m) == img);
}

TEST_CASE("parameter count follows the architecture formula") {
  const ModelConfig m;
  const Parameters p = init_parameters(m, 0);
  CHECK(parameter_count(p) == expected_count(m));
  CHECK(parameter_count(p) == 275456);
  const ModelConfig small = small_gradcheck_model();
  CHECK(parameter_count(init_parameters(small, 0)) == expected_count(small));
}

TEST_CASE("initialization is seeded: 0.02 weights, zero biases, unit gains") {
  const ModelConfig m;
  const Parameters a = init_parameters(m, 7);
  const Parameters b = init_parameters(m, 7);
  const Parameters c = init_parameters(m, 8);
  for (const auto& [name, t] : a) CHECK(t.data() == b.at(name).data());
  CHECK(a.at("llm.tok_embed").data() != c.at("llm.tok_embed").data());
  for (const auto& [name, t] : a) {
    if (name.ends_with(".bias")) CHECK(t.data().isZero(0.0));
    if (name.ends_with(".gain")) CHECK((t.data().array() == 1.0).all());
  }
  const Matrix& w = a.at("llm.block0.mlp.fc1.weight").data();
  const double sd = std::sqrt((w.array() - w.mean()).square().mean());
  CHECK(sd == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("image embeddings have n_patches x d_model rows matching the hidden image rows") {
  const ModelConfig m;
  const Parameters p = init_parameters(m, 1);
  Tape tape;
  ParamBinder binder(tape, p, false);
  const SampleForward f = forward_sample(binder, sample_for(m, 3), ModeLabel::Vdep, m);
  CHECK(f.image_embeddings.rows() == 16);
  CHECK(f.image_embeddings.cols() == 64);
  CHECK(f.image_embeddings.value().allFinite());
  const SequenceLayout& L = f.output.layout;
  CHECK(L.image_end - L.image_begin == f.image_embeddings.rows());
  CHECK(f.output.hidden.cols() == f.image_embeddings.cols());
}

TEST_CASE("sequence layout and mode tokens") {
  const ModelConfig m;
  const Parameters p = init_parameters(m, 1);
  const MultimodalSample s = sample_for(m, 3);
  for (ModeLabel mode : {ModeLabel::Vdep, ModeLabel::Llava}) {
    Tape tape;
    ParamBinder binder(tape, p, false);
    const SampleForward f = forward_sample(binder, s, mode, m);
    const SequenceLayout& L = f.sequence.layout;
    CHECK(L.bos == 0);
    CHECK(L.mode_token == 1);
    CHECK(L.image_begin == 2);
    CHECK(L.image_end == 18);
    CHECK(L.prompt_begin == 18);
    CHECK(L.prompt_end == 19);
    CHECK(L.response_begin == 19);
    CHECK(L.response_end == 24);
    CHECK(L.eos == 24);
    CHECK(L.total == 25);
    const auto& ids = f.sequence.token_ids;
    CHECK(ids[0] == token::kBos);
    CHECK(ids[1] == (mode == ModeLabel::Vdep ? token::kAutoImage : token::kImage));
    for (Index i = 2; i < 18; ++i) CHECK(ids[static_cast<std::size_t>(i)] == token::kPad);
    CHECK(ids[18] == token::kDescribe);
    for (std::size_t k = 0; k < 5; ++k) CHECK(ids[19 + k] == s.response[k]);
    CHECK(ids[24] == token::kEos);
  }
}

TEST_CASE("forward shapes, post-norm hidden states and causal attention") {
  const ModelConfig m;
  const Parameters p = init_parameters(m, 2);
  Tape tape;
  ParamBinder binder(tape, p, false);
  const SampleForward f = forward_sample(binder, sample_for(m, 5), ModeLabel::Llava, m);
  CHECK(f.output.hidden.rows() == 25);
  CHECK(f.output.logits.rows() == 25);
  CHECK(f.output.logits.cols() == 22);
  // Unit gain and zero bias at init: every hidden row is standardized.
  const Matrix& h = f.output.hidden.value();
  for (Index r = 0; r < h.rows(); ++r) {
    CHECK(std::abs(h.row(r).mean()) < 1e-9);
    CHECK((h.row(r).array() - h.row(r).mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-2));
  }
  REQUIRE(f.output.attention.size() == 4);
  for (const auto& layer : f.output.attention) {
    REQUIRE(layer.size() == 4);
    for (const Matrix& w : layer) {
      for (Index i = 0; i < w.rows(); ++i) {
        CHECK(std::abs(w.row(i).sum() - 1.0) <= 1e-12);
        for (Index j = i + 1; j < w.cols(); ++j) CHECK(w(i, j) == 0.0);
      }
    }
  }
}

TEST_CASE("sequences longer than max_seq_len are rejected") {
  ModelConfig m;
  m.max_seq_len = 20;
  const Parameters p = init_parameters(m, 0);
  Tape tape;
  ParamBinder binder(tape, p, false);
  CHECK_THROWS_AS(forward_sample(binder, sample_for(m, 1), ModeLabel::Llava, m), DimensionError);
}

TEST_CASE("config validation names the field") {
  ModelConfig m;
  m.patch_size = 5;
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("patch_size"), ConfigError);
  ModelConfig h;
  h.n_heads = 3;
  CHECK_THROWS_WITH_AS(h.validate(), doctest::Contains("n_heads"), ConfigError);
}

TEST_CASE("gradcheck through the vision encoder and projector") {
  const ModelConfig m = small_gradcheck_model();
  const Parameters p = init_parameters(m, 4, 0.3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> img(static_cast<std::size_t>(m.image_side * m.image_side * m.channels));
  for (double& v : img) v = u(rng);
  const PatchGrid grid = patchify(img, m);
  Matrix w(m.n_patches(), m.d_model);
  std::normal_distribution<double> nd;
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);

  std::vector<NamedInput> inputs;
  for (const auto& [name, t] : p) {
    if (name.starts_with("vision.") || name.starts_with("projector.")) inputs.push_back({name, t});
  }
  const auto report = gradcheck_inputs(
      [&](Tape& t, const std::vector<Var>& v) {
        ParamBinder b(t, p);
        for (std::size_t i = 0; i < v.size(); ++i) b.bind(inputs[i].name, v[i]);
        return sum(mul(encode_and_project(b, grid, m), t.constant(w)));
      },
      inputs, 1e-5, 6, 4);
  INFO(report.worst_input, "[", report.worst_index, "]");
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("end-to-end cross entropy gradcheck on a 2-layer d=16 model") {
  const ModelConfig m = small_gradcheck_model();
  REQUIRE(m.n_layers == 2);
  REQUIRE(m.d_model == 16);
  const Parameters p = init_parameters(m, 6, 0.3);
  MultimodalSample s;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  s.image.resize(static_cast<std::size_t>(m.image_side * m.image_side * m.channels));
  for (double& v : s.image) v = u(rng);
  s.prompt = {token::kDescribe};
  s.response = caption({ShapeKind::Cross, Color::Blue, 2, 1});

  std::vector<NamedInput> inputs;
  for (const auto& [name, t] : p) inputs.push_back({name, t});
  const auto report = gradcheck_inputs(
      [&](Tape& t, const std::vector<Var>& v) {
        ParamBinder b(t, p);
        for (std::size_t i = 0; i < v.size(); ++i) b.bind(inputs[i].name, v[i]);
        const SampleForward f = forward_sample(b, s, ModeLabel::Llava, m);
        std::vector<int> targets(static_cast<std::size_t>(f.output.layout.total), 0);
        std::vector<bool> mask(targets.size(), false);
        for (Index q = f.output.layout.response_begin; q < f.output.layout.response_end; ++q) {
          targets[static_cast<std::size_t>(q - 1)] = f.sequence.token_ids[static_cast<std::size_t>(q)];
          mask[static_cast<std::size_t>(q - 1)] = true;
        }
        return cross_entropy_masked(f.output.logits, targets, mask).value;
      },
      inputs, 1e-5, 4, 6);
  INFO(report.worst_input, "[", report.worst_index, "]");
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("greedy decoding emits a caption-length sequence of vocabulary ids") {
  const ModelConfig m;
  const Parameters p = init_parameters(m, 0);
  const auto out = greedy_caption(p, sample_for(m, 0), m);
  REQUIRE(out.size() == kCaptionLength);
  for (int id : out) CHECK((id >= 0 && id < m.vocab_size));
}
