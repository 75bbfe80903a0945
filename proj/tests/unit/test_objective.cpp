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
#include "vdep/objective.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vdep;

namespace {

SequenceLayout default_layout() {
  SequenceLayout L;
  L.bos = 0;
  L.mode_token = 1;
  L.image_begin = 2;
  L.image_end = 18;
  L.prompt_begin = 18;
  L.prompt_end = 19;
  L.response_begin = 19;
  L.response_end = 24;
  L.eos = 24;
  L.total = 25;
  return L;
}

struct Batch {
  ModelConfig model;
  Parameters params;
  std::vector<MultimodalSample> samples;
};

Batch make_batch() {
  Batch b;
  DatasetSpec spec;
  spec.size = 4;
  b.samples = generate_dataset(spec);
  b.params = init_parameters(b.model, 1);
  return b;
}

std::vector<SampleForward> forwards(ParamBinder& P, const Batch& b, std::vector<ModeLabel> modes) {
  std::vector<SampleForward> out;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    out.push_back(forward_sample(P, b.samples[i], modes[i], b.model));
  }
  return out;
}

}  // namespace

TEST_CASE("vdep masks with offset 1 pair the preceding position with each patch") {
  const auto m = supervision_masks(default_layout(), ModeLabel::Vdep, 1);
  REQUIRE(m.image_pairs.size() == 16);
  for (Index j = 0; j < 16; ++j) {
    CHECK(m.image_pairs[static_cast<std::size_t>(j)].first == j + 1);
    CHECK(m.image_pairs[static_cast<std::size_t>(j)].second == j);
  }
  for (bool on : m.text_mask) CHECK_FALSE(on);
}

TEST_CASE("vdep masks with offset 0 pair each image position with its own patch") {
  const auto m = supervision_masks(default_layout(), ModeLabel::Vdep, 0);
  REQUIRE(m.image_pairs.size() == 16);
  CHECK(m.image_pairs.front() == std::pair<Index, Index>{2, 0});
  CHECK(m.image_pairs.back() == std::pair<Index, Index>{17, 15});
}

TEST_CASE("llava masks supervise exactly the logits that predict response tokens") {
  const auto m = supervision_masks(default_layout(), ModeLabel::Llava, 1);
  CHECK(m.image_pairs.empty());
  REQUIRE(m.text_mask.size() == 25);
  for (std::size_t p = 0; p < 25; ++p) CHECK(m.text_mask[p] == (p >= 18 && p <= 22));
}

TEST_CASE("next-token targets shift by one") {
  const std::vector<int> ids{1, 3, 0, 5, 6, 2};
  const auto t = next_token_targets(ids);
  CHECK(t == std::vector<int>{3, 0, 5, 6, 2, token::kPad});
}

TEST_CASE("loss variants") {
  CHECK(apply_loss_variant(0.5, LossVariant::L2, 1e-6) == 0.5);
  CHECK(apply_loss_variant(0.5, LossVariant::InverseL2, 1e-6) == doctest::Approx(1.0 / (0.5 + 1e-6)));
  CHECK(apply_loss_variant(0.5, LossVariant::SigmoidL2, 1e-6) == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
  CHECK(parse_loss_variant("1/L2") == LossVariant::InverseL2);
  CHECK(parse_loss_variant("Sigmoid(L2)") == LossVariant::SigmoidL2);
  CHECK(parse_loss_variant("l2") == LossVariant::L2);
  CHECK_FALSE(parse_loss_variant("l1").has_value());

  Tape tape;
  Matrix h(2, 3);
  h << 1, 2, 3, 4, 5, 6;
  ImageLossConfig cfg;
  CHECK(image_alignment_loss(tape.constant(h), tape.constant(h), cfg).item() == 0.0);

  Matrix t = h;
  t(0, 0) += 1.0;
  t(1, 2) -= 2.0;
  const double m = (1.0 + 4.0) / 6.0;  // mean over all six elements
  CHECK(image_alignment_loss(tape.constant(h), tape.constant(t), cfg).item() == doctest::Approx(m));
  cfg.variant = LossVariant::InverseL2;
  CHECK(image_alignment_loss(tape.constant(h), tape.constant(t), cfg).item() ==
        doctest::Approx(1.0 / (m + 1e-6)));
  cfg.variant = LossVariant::SigmoidL2;
  CHECK(image_alignment_loss(tape.constant(h), tape.constant(t), cfg).item() ==
        doctest::Approx(1.0 / (1.0 + std::exp(-m))));
  CHECK_THROWS_AS(image_alignment_loss(tape.constant(h), tape.constant(Matrix::Zero(3, 3)), cfg),
                  DimensionError);
}

TEST_CASE("alpha zero makes the total equal the text loss") {
  const Batch b = make_batch();
  Tape tape;
  ParamBinder P(tape, b.params);
  const auto f = forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep, ModeLabel::Llava});
  HybridConfig cfg;
  cfg.alpha = 0.0;
  const HybridLoss l = hybrid_loss(f, cfg);
  CHECK(l.breakdown.total == l.breakdown.l_text);
  CHECK(l.breakdown.l_image > 0.0);
  CHECK(l.breakdown.text_position_count == 10);
  CHECK(l.breakdown.image_position_count == 16);
}

TEST_CASE("hybrid total combines the terms with alpha") {
  const Batch b = make_batch();
  Tape tape;
  ParamBinder P(tape, b.params);
  const auto f = forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep});
  HybridConfig cfg;
  cfg.alpha = 0.25;
  const HybridLoss l = hybrid_loss(f, cfg);
  CHECK(l.breakdown.total == doctest::Approx(l.breakdown.l_text + 0.25 * l.breakdown.l_image));
}

TEST_CASE("per-mode means do not depend on batch duplication") {
  const Batch b = make_batch();
  HybridConfig cfg;
  LossBreakdown once, twice;
  {
    Tape tape;
    ParamBinder P(tape, b.params);
    once = hybrid_loss(forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep}), cfg).breakdown;
  }
  {
    Tape tape;
    ParamBinder P(tape, b.params);
    auto f = forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep});
    auto g = forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep});
    f.insert(f.end(), g.begin(), g.end());
    twice = hybrid_loss(f, cfg).breakdown;
  }
  CHECK(twice.l_text == doctest::Approx(once.l_text).epsilon(1e-12));
  CHECK(twice.l_image == doctest::Approx(once.l_image).epsilon(1e-12));
}

TEST_CASE("text loss gradient is exactly zero at unsupervised logit rows") {
  const Batch b = make_batch();
  Tape tape;
  ParamBinder P(tape, b.params);
  const auto f = forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep});
  const HybridLoss l = hybrid_loss(f, HybridConfig{});
  tape.backward(l.l_text);
  const auto mask = supervision_masks(f[0].output.layout, ModeLabel::Llava, 1).text_mask;
  const Matrix g = tape.grad(f[0].output.logits);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) CHECK((g.row(static_cast<Index>(p)).array() == 0.0).all());
  }
  CHECK((tape.grad(f[1].output.logits).array() == 0.0).all());
}

TEST_CASE("image loss gradient never reaches the logits or the LM head") {
  const Batch b = make_batch();
  Tape tape;
  ParamBinder P(tape, b.params);
  const auto f = forwards(P, b, {ModeLabel::Llava, ModeLabel::Vdep});
  const HybridLoss l = hybrid_loss(f, HybridConfig{});
  tape.backward(l.l_image);
  for (const auto& s : f) CHECK((tape.grad(s.output.logits).array() == 0.0).all());
  CHECK((tape.grad(P("llm.lm_head.weight")).array() == 0.0).all());
  CHECK(tape.grad(P("llm.ln_f.gain")).cwiseAbs().sum() > 0.0);
}

TEST_CASE("detached targets equal a frozen copy of the image embeddings") {
  const Batch b = make_batch();
  HybridConfig detached;
  detached.alpha = 1.0;
  HybridConfig live = detached;
  live.image.detach_target = false;

  auto grad_of = [&](const HybridConfig& cfg, bool freeze) {
    Tape tape;
    ParamBinder P(tape, b.params);
    auto f = forwards(P, b, {ModeLabel::Vdep});
    if (freeze) f[0].image_embeddings = tape.constant(f[0].image_embeddings.value());
    tape.backward(hybrid_loss(f, cfg).total);
    return tape.grad(P("projector.fc2.weight"));
  };
  const Matrix g_detached = grad_of(detached, false);
  const Matrix g_frozen = grad_of(live, true);
  const Matrix g_live = grad_of(live, false);
  CHECK(g_detached.isApprox(g_frozen, 1e-12));
  CHECK_FALSE(g_live.isApprox(g_detached, 1e-6));
}

TEST_CASE("hybrid loss input checks") {
  CHECK_THROWS_AS(hybrid_loss({}, HybridConfig{}), DomainError);
  const Batch b = make_batch();
  Tape tape;
  ParamBinder P(tape, b.params);
  const auto f = forwards(P, b, {ModeLabel::Llava});
  HybridConfig cfg;
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(hybrid_loss(f, cfg), DomainError);
}
