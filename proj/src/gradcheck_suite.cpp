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

#include "vdep/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vdep {

namespace {

using Rng = std::mt19937_64;

Matrix normal(Rng& rng, Index r, Index c, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// sum(v * W) for a fixed random W.
Var weighted_sum(const Var& v, const Matrix& w) { return sum(mul(v, v.tape().constant(w))); }

struct OpCase {
  std::string name;
  std::vector<NamedInput> inputs;
  MultiFunction f;
};

std::vector<OpCase> op_cases(Rng& rng) {
  std::vector<OpCase> cases;
  auto in = [&](const char* name, Matrix m) { return NamedInput{name, Tensor(std::move(m))}; };

  {
    Matrix w = normal(rng, 4, 3);
    cases.push_back({"matmul",
                     {in("a", normal(rng, 4, 5)), in("b", normal(rng, 5, 3))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(matmul(v[0], v[1]), w); }});
  }
  for (const char* name : {"add", "sub", "mul"}) {
    Matrix w = normal(rng, 3, 4);
    const std::string op = name;
    cases.push_back({op,
                     {in("a", normal(rng, 3, 4)), in("b", normal(rng, 3, 4))},
                     [w, op](Tape&, const std::vector<Var>& v) {
                       Var r = op == "add" ? add(v[0], v[1]) : op == "sub" ? sub(v[0], v[1]) : mul(v[0], v[1]);
                       return weighted_sum(r, w);
                     }});
  }
  {
    Matrix w = normal(rng, 3, 4);
    cases.push_back({"scale", {in("a", normal(rng, 3, 4))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(scale(v[0], -1.7), w); }});
  }
  {
    Matrix w = normal(rng, 3, 4);
    cases.push_back({"add_row",
                     {in("a", normal(rng, 3, 4)), in("row", normal(rng, 1, 4))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(add_row(v[0], v[1]), w); }});
  }
  {
    Matrix w = normal(rng, 3, 2);
    cases.push_back({"linear",
                     {in("x", normal(rng, 3, 5)), in("weight", normal(rng, 5, 2)), in("bias", normal(rng, 1, 2))},
                     [w](Tape&, const std::vector<Var>& v) {
                       return weighted_sum(linear(v[0], v[1], v[2]), w);
                     }});
  }
  {
    Matrix w = normal(rng, 1, 1);
    cases.push_back({"sum", {in("a", normal(rng, 3, 4))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(sum(v[0]), w); }});
    cases.push_back({"mean", {in("a", normal(rng, 3, 4))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(mean(v[0]), w); }});
  }
  {
    Matrix w = normal(rng, 2, 8);
    cases.push_back({"softmax", {in("x", normal(rng, 2, 8))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(softmax_lastdim(v[0]), w); }});
  }
  {
    Matrix w = normal(rng, 3, 6);
    cases.push_back({"layer_norm",
                     {in("x", normal(rng, 3, 6)), in("gain", normal(rng, 1, 6)), in("bias", normal(rng, 1, 6))},
                     [w](Tape&, const std::vector<Var>& v) {
                       return weighted_sum(layer_norm(v[0], v[1], v[2]), w);
                     }});
  }
  {
    Matrix w = normal(rng, 3, 5);
    cases.push_back({"gelu", {in("x", normal(rng, 3, 5, 2.0))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(gelu(v[0]), w); }});
    cases.push_back({"sigmoid", {in("x", normal(rng, 3, 5, 2.0))},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(sigmoid(v[0]), w); }});
    Matrix positive = normal(rng, 3, 5).cwiseAbs().array() + 0.5;
    cases.push_back({"reciprocal", {in("x", positive)},
                     [w](Tape&, const std::vector<Var>& v) { return weighted_sum(reciprocal(v[0], 1e-6), w); }});
  }
  {
    // Repeated ids exercise scatter-accumulation into the same table row.
    std::vector<int> ids{2, 0, 2, 4, 2};
    Matrix w = normal(rng, 5, 3);
    cases.push_back({"embedding_lookup", {in("table", normal(rng, 5, 3))},
                     [w, ids](Tape&, const std::vector<Var>& v) {
                       return weighted_sum(embedding_lookup(v[0], ids), w);
                     }});
  }
  {
    std::vector<Index> rows{3, 1, 3};
    Matrix w = normal(rng, 3, 4);
    cases.push_back({"gather_rows", {in("x", normal(rng, 5, 4))},
                     [w, rows](Tape&, const std::vector<Var>& v) {
                       return weighted_sum(gather_rows(v[0], rows), w);
                     }});
    Matrix ws = normal(rng, 2, 4);
    cases.push_back({"slice_rows", {in("x", normal(rng, 5, 4))},
                     [ws](Tape&, const std::vector<Var>& v) { return weighted_sum(slice_rows(v[0], 2, 2), ws); }});
    Matrix wc = normal(rng, 5, 4);
    cases.push_back({"concat_rows",
                     {in("a", normal(rng, 2, 4)), in("b", normal(rng, 3, 4))},
                     [wc](Tape&, const std::vector<Var>& v) {
                       Var parts[] = {v[0], v[1]};
                       return weighted_sum(concat_rows(parts), wc);
                     }});
  }
  {
    std::uniform_int_distribution<int> tok(0, 6);
    std::vector<int> targets(5);
    for (int& t : targets) t = tok(rng);
    std::vector<bool> mask{true, false, true, true, false};
    cases.push_back({"cross_entropy_masked", {in("logits", normal(rng, 5, 7))},
                     [targets, mask](Tape&, const std::vector<Var>& v) {
                       return cross_entropy_masked(v[0], targets, mask).value;
                     }});
    std::vector<bool> rows_mask{true, true, false, true, false};
    cases.push_back({"masked_mean_squared_error",
                     {in("pred", normal(rng, 5, 3)), in("target", normal(rng, 5, 3))},
                     [rows_mask](Tape&, const std::vector<Var>& v) {
                       return masked_mean_squared_error(v[0], v[1], rows_mask).value;
                     }});
  }
  for (bool causal : {true, false}) {
    Matrix w = normal(rng, 5, 8);
    cases.push_back({causal ? "attention_causal" : "attention_bidirectional",
                     {in("q", normal(rng, 5, 8)), in("k", normal(rng, 5, 8)), in("v", normal(rng, 5, 8))},
                     [w, causal](Tape&, const std::vector<Var>& v) {
                       return weighted_sum(multi_head_attention(v[0], v[1], v[2], 2, causal).out, w);
                     }});
  }
  return cases;
}

MultimodalSample random_sample(Rng& rng, const ModelConfig& model) {
  MultimodalSample s;
  std::uniform_real_distribution<double> px(0.0, 1.0);
  s.image.resize(static_cast<std::size_t>(model.image_side * model.image_side * model.channels));
  for (double& v : s.image) v = px(rng);
  const auto scenes = all_scenes();
  s.scene = scenes[std::uniform_int_distribution<std::size_t>(0, scenes.size() - 1)(rng)];
  s.prompt = {token::kDescribe};
  s.response = caption(s.scene);
  return s;
}

struct HybridSetup {
  ModelConfig model;
  Parameters params;
  std::vector<std::string> names;
  std::vector<MultimodalSample> samples;  // [0] Llava, [1] Vdep
  Matrix frozen_targets;
};

// Builds the two-sample hybrid loss with parameter values taken from `vars`.
Var hybrid_total(Tape& tape, const std::vector<Var>& vars, const HybridSetup& s,
                 const HybridConfig& cfg, bool frozen) {
  ParamBinder binder(tape, s.params, true);
  for (std::size_t i = 0; i < vars.size(); ++i) binder.bind(s.names[i], vars[i]);
  std::vector<SampleForward> batch;
  batch.push_back(forward_sample(binder, s.samples[0], ModeLabel::Llava, s.model));
  batch.push_back(forward_sample(binder, s.samples[1], ModeLabel::Vdep, s.model));
  if (frozen) batch[1].image_embeddings = tape.constant(s.frozen_targets);
  return hybrid_loss(batch, cfg).total;
}

std::vector<Matrix> analytic_grads(const HybridSetup& s, const HybridConfig& cfg, bool frozen) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& name : s.names) vars.push_back(tape.leaf(Tensor(s.params.at(name).data(), true)));
  tape.backward(hybrid_total(tape, vars, s, cfg, frozen));
  std::vector<Matrix> out;
  for (const Var& v : vars) out.push_back(tape.grad(v));
  return out;
}

}  // namespace

std::vector<GradcheckCase> op_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed, double step) {
  std::vector<GradcheckCase> out;
  for (std::size_t k = 0; k < seeds; ++k) {
    const std::uint64_t seed = base_seed + k;
    Rng rng(seed);
    for (auto& c : op_cases(rng)) {
      out.push_back({c.name, seed, gradcheck_inputs(c.f, c.inputs, step)});
    }
  }
  return out;
}

ModelConfig small_gradcheck_model() {
  ModelConfig m;
  m.d_model = 16;
  m.n_layers = 2;
  m.n_heads = 2;
  m.image_side = 8;
  m.patch_size = 4;
  m.max_seq_len = 16;
  m.projector_hidden = 32;
  m.vision_layers = 1;
  return m;
}

std::vector<GradcheckCase> hybrid_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed,
                                                  const HybridGradcheckOptions& opts) {
  opts.model.validate();
  std::vector<GradcheckCase> out;
  for (std::size_t k = 0; k < seeds; ++k) {
    const std::uint64_t seed = base_seed + k;
    Rng rng(seed);
    HybridSetup s;
    s.model = opts.model;
    s.params = init_parameters(s.model, seed, opts.init_std);
    for (const auto& [name, _] : s.params) s.names.push_back(name);
    s.samples = {random_sample(rng, s.model), random_sample(rng, s.model)};
    {
      Tape tape;
      ParamBinder binder(tape, s.params, false);
      s.frozen_targets = encode_and_project(binder, patchify(s.samples[1].image, s.model), s.model).value();
    }
    std::vector<NamedInput> inputs;
    for (const auto& name : s.names) inputs.push_back({name, s.params.at(name)});

    for (LossVariant variant : {LossVariant::L2, LossVariant::InverseL2, LossVariant::SigmoidL2}) {
      for (int offset : {0, 1}) {
        HybridConfig cfg;
        cfg.alpha = opts.alpha;
        cfg.image.variant = variant;
        cfg.image.offset = offset;
        const std::string tag =
            "hybrid/" + std::string(to_string(variant)) + "/offset" + std::to_string(offset);

        // Live targets: gradient flows into the projector through both sides.
        cfg.image.detach_target = false;
        auto live = [&s, cfg](Tape& t, const std::vector<Var>& v) {
          return hybrid_total(t, v, s, cfg, false);
        };
        out.push_back({tag + "/live", seed,
                       gradcheck_inputs(live, inputs, opts.step, opts.coords_per_tensor, seed)});

        // Frozen copies: finite differences of the constant-target loss, and
        // the detached gradient must equal that loss's gradient.
        auto frozen = [&s, cfg](Tape& t, const std::vector<Var>& v) {
          return hybrid_total(t, v, s, cfg, true);
        };
        GradcheckReport report =
            gradcheck_inputs(frozen, inputs, opts.step, opts.coords_per_tensor, seed);
        HybridConfig detached = cfg;
        detached.image.detach_target = true;
        const auto g_detached = analytic_grads(s, detached, false);
        const auto g_frozen = analytic_grads(s, cfg, true);
        for (std::size_t i = 0; i < s.names.size(); ++i) {
          for (Index c = 0; c < g_frozen[i].size(); ++c) {
            const double a = g_detached[i].data()[c];
            const double n = g_frozen[i].data()[c];
            const double err = gradcheck_relative_error(a, n);
            ++report.coordinates_checked;
            if (err > report.max_rel_error) {
              report.max_rel_error = err;
              report.worst_input = "detached:" + s.names[i];
              report.worst_index = c;
              report.worst_analytic = a;
              report.worst_numeric = n;
            }
          }
        }
        out.push_back({tag + "/frozen", seed, report});
      }
    }
  }
  return out;
}

double worst_error(const std::vector<GradcheckCase>& cases) {
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.report.max_rel_error);
  return worst;
}

}  // namespace vdep
