// Copyright 2026 The hdyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "hdyn/baselines.hpp"
#include "hdyn/gradcheck.hpp"

namespace hdyn {
namespace {

// A few push systems, each with a probe and a target trajectory.
std::vector<Sample> push_samples(std::size_t n_systems, std::uint64_t seed, bool test = false) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n_systems; ++i) {
    const PushSystem sys = sample_push_system(rng, test);
    const auto probe = collect_push_trajectory(sys, rng, 5);
    auto obs = std::make_shared<const SystemObs>(push_system_obs(sys, probe));
    append_push_samples(obs, collect_push_trajectory(sys, rng, 5), out);
  }
  return out;
}

std::vector<Sample> loco_samples(std::size_t steps, std::uint64_t seed) {
  Rng rng(seed);
  const LocoSystem sys = sample_loco_system(rng, LocoVariant::kSlope, false);
  const auto tr =
      collect_loco_rollout(sys, [&](const LocoTrajectory&) { return rng.uniform(-1, 1); }, steps);
  std::vector<Sample> out;
  append_loco_samples(sys, tr, 0, out);
  return out;
}

std::vector<const Sample*> ptrs(const std::vector<Sample>& s, std::size_t n = 0) {
  std::vector<const Sample*> p;
  for (std::size_t i = 0; i < (n ? std::min(n, s.size()) : s.size()); ++i) p.push_back(&s[i]);
  return p;
}

ModelConfig push_config() {
  ModelConfig c;
  c.task = TaskKind::kPush;
  for (const auto& s : train_shapes()) c.expert_ids.push_back(s.id);
  return c;
}

ModelConfig loco_config() {
  ModelConfig c;
  c.task = TaskKind::kLoco;
  c.target_hidden = {32, 32};
  c.int_hidden = {32, 32};
  c.expert_params = {0.5, 1.25, 2.0, 2.75, 3.5};
  return c;
}

double grad_mag(const Var& v) {
  double m = 0.0;
  const Tensor g = v.grad();
  for (double x : g.data()) m += std::abs(x);
  return m;
}

// Moves every bias off zero so finite differences do not straddle a kink.
void jitter_biases(ParamSet& p, Rng& rng) {
  for (auto& [name, v] : p) {
    const auto dot = name.rfind('.');
    const char kind = name[dot + 1];
    if (kind == 'b' || kind == 'c') {
      for (double& x : v.value().vec()) x = rng.uniform(-0.3, 0.3);
    }
  }
}

void zero_params(ParamSet& p) {
  for (auto& [name, v] : p) v.value().fill(0.0);
}

// ---------------------------------------------------------------------------
// Encoders

TEST(Encoders, ZeroParamsGiveOutputBias) {
  Rng rng(1);
  const MlpSpec spec = interaction_spec(90, {8}, 2);
  ParamSet p;
  init_mlp(p, kIntPrefix, spec, rng);
  zero_params(p);
  p.at("int.b1").value() = Tensor::vector({0.25, -1.5});
  Tensor w = Tensor::zeros({90});
  for (std::size_t i = 0; i < 90; ++i) w[i] = rng.uniform(-1, 1);
  const Var z = encode_interaction(spec, p, Var::constant(w));
  EXPECT_EQ(z.value()[0], 0.25);
  EXPECT_EQ(z.value()[1], -1.5);
}

TEST(Encoders, WrongWindowLengthThrows) {
  Rng rng(1);
  const MlpSpec spec = interaction_spec(90, {8}, 2);
  ParamSet p;
  init_mlp(p, kIntPrefix, spec, rng);
  EXPECT_THROW(encode_interaction(spec, p, Var::constant(Tensor::zeros({72}))), ShapeError);
}

TEST(Encoders, InteractionEncoderIsOrderSensitive) {
  Rng rng(2);
  const MlpSpec spec = interaction_spec(90, {8}, 2);
  ParamSet p;
  init_mlp(p, kIntPrefix, spec, rng);
  const auto samples = push_samples(1, 3);
  const auto& w = samples[0].obs->window;
  std::vector<double> swapped = w;
  std::swap_ranges(swapped.begin() + 18, swapped.begin() + 36, swapped.begin() + 36);
  const Var a = encode_interaction(spec, p, Var::constant(Tensor::vector(w)));
  const Var b = encode_interaction(spec, p, Var::constant(Tensor::vector(swapped)));
  EXPECT_GT(max_abs_diff(a.value(), b.value()), 0.0);
}

TEST(Encoders, ZeroGridGivesBiasOnlyOutput) {
  Rng rng(4);
  const ConvStackSpec spec = shape_spec(8);
  ParamSet p;
  init_conv_stack(p, kVisPrefix, spec, rng);
  for (auto& [name, v] : p) {
    if (name.find(".c") != std::string::npos || name.find(".b") != std::string::npos) {
      for (double& x : v.value().vec()) x = rng.uniform(-0.5, 0.5);
    }
  }
  const Var zero = Var::constant(Tensor::zeros({1, 16, 16}));
  const Tensor a = encode_shape(spec, p, zero).value();
  ParamSet kernels_zeroed = p.clone();
  for (auto& [name, v] : kernels_zeroed) {
    if (name == "vis.K0") v.value().fill(0.0);
  }
  EXPECT_TRUE(a == encode_shape(spec, kernels_zeroed, zero).value());
}

TEST(Encoders, CircleCodeInvariantAtQuarterTurns) {
  Rng rng(5);
  const ConvStackSpec spec = shape_spec(8);
  ParamSet p;
  init_conv_stack(p, kVisPrefix, spec, rng);
  const Tensor circle = shape_grid({ShapeFamily::kEllipse, 10, 10});
  auto code = [&](double th) {
    return encode_shape(spec, p, Var::constant(rotate_grid(circle, th).reshaped({1, 16, 16})))
        .value();
  };
  const Tensor base = code(0.0);
  for (int q = 1; q < 4; ++q) EXPECT_LE(max_abs_diff(code(q * std::numbers::pi / 2), base), 1e-6);
}

TEST(Encoders, ZeroRotationIsBitwiseIdentity) {
  Rng rng(6);
  const ConvStackSpec spec = shape_spec(8);
  ParamSet p;
  init_conv_stack(p, kVisPrefix, spec, rng);
  for (const auto& s : train_shapes()) {
    const Tensor g = shape_grid(s.params);
    const Tensor a = encode_shape(spec, p, Var::constant(g.reshaped({1, 16, 16}))).value();
    const Tensor b =
        encode_shape(spec, p, Var::constant(rotate_grid(g, 0.0).reshaped({1, 16, 16}))).value();
    EXPECT_TRUE(a == b);
  }
}

TEST(Encoders, ReconstructionLossArithmetic) {
  const Tensor g = shape_grid({ShapeFamily::kT, 10, 12});
  const Var grid = Var::constant(g.reshaped({1, 1, 16, 16}));
  EXPECT_EQ(reconstruction_loss(Var::constant(g.reshaped({1, 256})), grid).value()[0], 0.0);
  EXPECT_EQ(reconstruction_loss(Var::constant(Tensor::filled({1, 256}, 0.5)), grid).value()[0],
            0.25);
}

TEST(Encoders, LatentDimensions) {
  Rng rng(7);
  const auto ps = push_samples(2, 8);
  const auto ls = loco_samples(20, 9);
  HyperDynamicsModel push(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  HyperDynamicsModel loco(loco_config(), Normalizers::fit(TaskKind::kLoco, ls), rng);
  const Batch pb = make_batch(TaskKind::kPush, push.norm(), ptrs(ps));
  const Batch lb = make_batch(TaskKind::kLoco, loco.norm(), ptrs(ls));
  EXPECT_EQ(push.latent(pb).shape(), (Shape{pb.size(), 10}));
  EXPECT_EQ(loco.latent(lb).shape(), (Shape{lb.size(), 2}));
}

TEST(Encoders, EveryBranchReceivesGradient) {
  Rng rng(10);
  const auto ps = push_samples(3, 11);
  HyperDynamicsModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  Batch b = make_batch(TaskKind::kPush, m.norm(), ptrs(ps));
  m.params().zero_grad();
  backward(m.loss(b));
  for (std::string_view pre : {kIntPrefix, kVisPrefix, kDecPrefix, kHypPrefix}) {
    double mag = 0.0;
    for (const auto& [name, v] : m.params()) {
      if (name.rfind(pre, 0) == 0) mag += grad_mag(v);
    }
    EXPECT_GT(mag, 0.0) << pre;
  }
}

TEST(Encoders, DecoderGradientDoesNotReachInteractionEncoder) {
  Rng rng(12);
  const auto ps = push_samples(2, 13);
  HyperDynamicsModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  const Batch b = make_batch(TaskKind::kPush, m.norm(), ptrs(ps));
  m.params().zero_grad();
  const Var zv = encode_shape(m.shape(), m.params(), Var::constant(b.grid));
  backward(reconstruction_loss(decode_shape(m.decoder(), m.params(), zv), Var::constant(b.grid)));
  for (const auto& [name, v] : m.params()) {
    if (name.rfind(kIntPrefix, 0) == 0) {
      EXPECT_EQ(grad_mag(v), 0.0) << name;
    }
  }
}

// ---------------------------------------------------------------------------
// Hypernetwork

TEST(Hypernet, ParamCounts) {
  EXPECT_EQ(param_count(push_target_spec({32, 32, 32})), 2696u);
  EXPECT_EQ(param_count(MlpSpec({1, 1})), 2u);
  EXPECT_EQ(param_count(loco_target_spec({128, 128})), 17282u);
}

TEST(Hypernet, GeneratedLengthMatchesEveryConfig) {
  Rng rng(14);
  const std::vector<MlpSpec> targets{push_target_spec({32, 32, 32}),
                                     push_target_spec({32, 32, 32}, true),
                                     loco_target_spec({128, 128}), loco_target_spec({32, 32})};
  for (const auto& t : targets) {
    for (std::size_t z : {2u, 10u, 12u, 40u}) {
      const HyperSpec h(z, 16, t);
      ParamSet p;
      init_hypernet(p, h, rng);
      const Var w = generate_weights(h, p, Var::constant(Tensor::zeros({3, z})));
      EXPECT_EQ(w.shape(), (Shape{3, param_count(t)}));
    }
  }
}

TEST(Hypernet, ZeroParamsGiveOutputBias) {
  Rng rng(15);
  const HyperSpec h(2, 16, MlpSpec({3, 4, 2}));
  ParamSet p;
  init_hypernet(p, h, rng);
  zero_params(p);
  Tensor& b = p.at("hyp.b1").value();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.01 * static_cast<double>(i);
  const Var w = generate_weights(h, p, Var::constant(Tensor::vector({0.3, -2.0})));
  EXPECT_TRUE(w.value() == b);
}

TEST(Hypernet, WrongLatentWidthThrows) {
  Rng rng(15);
  const HyperSpec h(2, 16, MlpSpec({3, 4, 2}));
  ParamSet p;
  init_hypernet(p, h, rng);
  EXPECT_THROW(generate_weights(h, p, Var::constant(Tensor::zeros({3}))), ShapeError);
}

TEST(Hypernet, ZeroWeightsPredictZero) {
  const MlpSpec t = push_target_spec();
  const Var y = predict_delta(t, Var::constant(Tensor::zeros({param_count(t)})),
                              Var::constant(Tensor::filled({7}, 0.3)),
                              Var::constant(Tensor::filled({2}, -0.2)));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Hypernet, LossArithmetic) {
  Tensor truth = Tensor::zeros({1, 8});
  truth[0] = 3.0;
  truth[1] = 4.0;
  const Var pred = Var::constant(Tensor::zeros({1, 8}));
  EXPECT_EQ(prediction_loss(pred, Var::constant(truth), Objective::kEuclid).value()[0], 5.0);
  EXPECT_EQ(prediction_loss(pred, Var::constant(truth), Objective::kMse).value()[0], 25.0 / 8.0);
  EXPECT_EQ(mean_euclidean_error(pred.value(), truth), 5.0);
  EXPECT_EQ(prediction_loss(Var::constant(truth), Var::constant(truth), Objective::kMse)
                .value()[0],
            0.0);
}

TEST(Hypernet, BatchLossIsMeanOfSampleLosses) {
  Rng rng(16);
  Tensor p = Tensor::zeros({4, 3}), t = Tensor::zeros({4, 3});
  for (double& v : p.vec()) v = rng.uniform(-1, 1);
  for (double& v : t.vec()) v = rng.uniform(-1, 1);
  for (auto obj : {Objective::kMse, Objective::kEuclid}) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      sum += prediction_loss(Var::constant(gather_rows(p, {i})),
                             Var::constant(gather_rows(t, {i})), obj)
                 .value()[0];
    }
    EXPECT_NEAR(prediction_loss(Var::constant(p), Var::constant(t), obj).value()[0], sum / 4,
                1e-15);
  }
}

TEST(Hypernet, EndToEndGradientLoco) {
  Rng rng(17);
  const auto ls = loco_samples(12, 18);
  ModelConfig c = loco_config();
  c.target_hidden = {4};
  c.int_hidden = {3};
  HyperDynamicsModel m(c, Normalizers::fit(TaskKind::kLoco, ls), rng);
  jitter_biases(m.params(), rng);
  EXPECT_EQ(m.hyper_spec().target.layer_sizes, (std::vector<std::size_t>{3, 4, 2}));
  const Batch b = make_batch(TaskKind::kLoco, m.norm(), ptrs(ls, 6));
  const auto r = finite_diff_check([&] { return m.loss(b); }, m.params());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Hypernet, EndToEndGradientPushThroughAllEncoders) {
  Rng rng(19);
  const auto ps = push_samples(20, 20);
  ModelConfig c = push_config();
  c.target_hidden = {4};
  c.z_int = 1;
  c.z_vis = 1;
  c.int_hidden = {3};
  c.decoder_hidden = 4;
  HyperDynamicsModel m(c, Normalizers::fit(TaskKind::kPush, ps), rng);
  jitter_biases(m.params(), rng);
  Batch b = make_batch(TaskKind::kPush, m.norm(), ptrs(ps, 2));
  const auto r = finite_diff_check([&] { return m.loss(b); }, m.params());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(Hypernet, FixedLatentDefinesFixedFunction) {
  Rng rng(21);
  const auto ls = loco_samples(20, 22);
  HyperDynamicsModel m(loco_config(), Normalizers::fit(TaskKind::kLoco, ls), rng);
  const auto pred = m.bind(*ls[10].obs);
  std::vector<double> f, a;
  for (int i = 0; i < 1000; ++i) {
    f.insert(f.end(), {rng.uniform(0, 50), rng.uniform(-2, 6)});
    a.push_back(rng.uniform(-1, 1));
  }
  EXPECT_TRUE(pred->predict(f, a) == pred->predict(f, a));
  EXPECT_TRUE(m.bind(*ls[10].obs)->predict(f, a) == pred->predict(f, a));
}

TEST(Hypernet, OrientationChangesGeneratedExpert) {
  Rng rng(23);
  const auto ps = push_samples(2, 24);
  HyperDynamicsModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  const Tensor l_grid = shape_grid({ShapeFamily::kL, 12, 10});
  const auto z0 = m.shape_code(l_grid, 0.0);
  const auto z1 = m.shape_code(l_grid, std::numbers::pi / 2);
  EXPECT_NE(z0, z1);
  std::vector<double> zi{0.1, -0.2};
  auto full0 = zi, full1 = zi;
  full0.insert(full0.end(), z0.begin(), z0.end());
  full1.insert(full1.end(), z1.begin(), z1.end());
  const auto w0 = m.weights_for(full0);
  const auto w1 = m.weights_for(full1);
  double d = 0.0;
  for (std::size_t i = 0; i < w0.size(); ++i) d += (w0[i] - w1[i]) * (w0[i] - w1[i]);
  EXPECT_GT(std::sqrt(d), 0.0);
}

struct EnvPredictor : Predictor {
  PushSystem sys;
  Tensor predict(std::span<const double> full, std::span<const double> action) const override {
    const std::size_t n = full.size() / 8;
    Tensor out = Tensor::zeros({n, 8});
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, 8> s{};
      std::copy_n(full.data() + 8 * i, 8, s.begin());
      const PushDelta d =
          push_delta(sys, PushState::from_array(s), {{action[2 * i], action[2 * i + 1]}});
      std::copy(d.begin(), d.end(), out.data().begin() + static_cast<std::ptrdiff_t>(8 * i));
    }
    return out;
  }
};

TEST(Unroll, GroundTruthModelReproducesEnvironment) {
  Rng rng(25);
  for (int i = 0; i < 20; ++i) {
    EnvPredictor env;
    env.sys = sample_push_system(rng, i % 2 == 0);
    const PushState s0 = sample_push_start(env.sys, rng);
    std::vector<PushAction> actions;
    PushState s = s0;
    for (int t = 0; t < 8; ++t) {
      actions.push_back(sample_push_action(env.sys, s, rng));
      s = push_step(env.sys, s, actions.back());
    }
    const auto states = unroll_push(env, s0, actions);
    const auto truth = rollout_push(env.sys, s0, actions);
    ASSERT_EQ(states.size(), truth.states.size());
    for (std::size_t t = 0; t < states.size(); ++t) EXPECT_EQ(states[t], truth.states[t]);
  }
  EnvPredictor env;
  env.sys = sample_push_system(rng, false);
  EXPECT_EQ(unroll_push(env, PushState{}, {}).size(), 1u);
}

TEST(Unroll, CompositionAndOneStepDefinition) {
  Rng rng(26);
  const auto ps = push_samples(2, 27);
  HyperDynamicsModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  const auto pred = m.bind(*ps[0].obs);
  PushState s0 = PushState::from_array({0.3, 0.3, 0.4, 0.0, 0.0, 0.0, 0.22, 0.3});
  std::vector<PushAction> acts;
  for (int i = 0; i < 7; ++i) acts.push_back({{rng.uniform(0.02, 0.05), rng.uniform(-0.02, 0.02)}});
  const auto all = unroll_push(*pred, s0, acts);
  const std::vector<PushAction> first(acts.begin(), acts.begin() + 3);
  const std::vector<PushAction> rest(acts.begin() + 3, acts.end());
  const auto a = unroll_push(*pred, s0, first);
  const auto b = unroll_push(*pred, a.back(), rest);
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(all[t], a[t]);
  for (std::size_t t = 0; t < b.size(); ++t) EXPECT_EQ(all[3 + t], b[t]);
  EXPECT_EQ(all[1], compose(s0, predict_push(*pred, s0, acts[0])));

  const auto ls = loco_samples(30, 28);
  HyperDynamicsModel lm(loco_config(), Normalizers::fit(TaskKind::kLoco, ls), rng);
  const auto lp = lm.bind(*ls[20].obs);
  const std::vector<double> la{0.5, -0.2, 1.0, 0.3, 0.9};
  const auto lall = unroll_loco(*lp, {1.0, 0.5}, la);
  const auto l1 = unroll_loco(*lp, {1.0, 0.5}, {la.begin(), la.begin() + 2});
  const auto l2 = unroll_loco(*lp, l1.back(), {la.begin() + 2, la.end()});
  for (std::size_t t = 0; t < l2.size(); ++t) EXPECT_EQ(lall[2 + t], l2[t]);
}

TEST(Unroll, BatchedPredictionMatchesRowwise) {
  Rng rng(29);
  const auto ps = push_samples(3, 30);
  HyperDynamicsModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  const auto pred = m.bind(*ps[0].obs);
  std::vector<double> f, a;
  for (const auto& s : ps) {
    f.insert(f.end(), s.full.begin(), s.full.end());
    a.insert(a.end(), s.action.begin(), s.action.end());
  }
  const Tensor all = pred->predict(f, a);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor one = pred->predict(ps[i].full, ps[i].action);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(all.at(i, j), one[j]);
  }
}

TEST(Unroll, BoundPredictorMatchesTrainingGraph) {
  Rng rng(31);
  const auto ps = push_samples(2, 32);
  HyperDynamicsModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  const Batch b = make_batch(TaskKind::kPush, m.norm(), ptrs(ps));
  const Var w = generate_weights(m.hyper_spec(), m.params(), m.latent(b));
  const Tensor graph = predict_delta(m.hyper_spec().target, w, Var::constant(b.obs),
                                     Var::constant(b.action))
                           .value();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor raw = m.bind(*ps[i].obs)->predict(ps[i].full, ps[i].action);
    for (std::size_t j = 0; j < 8; ++j) {
      const double expect = graph.at(i, j) * m.norm().delta.std[j] + m.norm().delta.mean[j];
      EXPECT_NEAR(raw[j], expect, 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// Baselines

TEST(Baselines, ArchitectureParity) {
  Rng rng(33);
  const auto ps = push_samples(2, 34);
  const auto nz = Normalizers::fit(TaskKind::kPush, ps);
  const ModelConfig c = push_config();
  HyperDynamicsModel hd(c, nz, rng);
  const auto hidden = hd.hyper_spec().target.hidden();
  EXPECT_EQ(hidden, c.target_hidden);
  EXPECT_EQ(XyzModel(c, nz, rng).head().hidden(), hidden);
  EXPECT_EQ(DirectModel(c, nz, rng).head().hidden(), hidden);
  EXPECT_EQ(RecurrentModel(c, nz, rng).head().hidden(), hidden);
  EXPECT_EQ(FomamlModel(c, nz, rng).head().hidden(), hidden);
  EXPECT_EQ(ExpertEnsembleModel(c, nz, rng).head().hidden(), hidden);
}

TEST(Baselines, XyzZeroWeightsAndDeterminism) {
  Rng rng(35);
  const auto ps = push_samples(2, 36);
  XyzModel m(push_config(), Normalizers::identity(TaskKind::kPush), rng);
  const Batch b = make_batch(TaskKind::kPush, m.norm(), ptrs(ps));
  EXPECT_TRUE(m.forward(b).value() == m.forward(b).value());
  zero_params(m.params());
  const Tensor y = m.forward(b).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Baselines, DirectWithZeroLatentIsPaddedXyzShape) {
  Rng rng(37);
  const MlpSpec wide = head_spec(7 + 2 + 10, {32, 32, 32}, 8);
  const MlpSpec narrow = head_spec(7 + 2, {32, 32, 32}, 8);
  ParamSet pw;
  init_mlp(pw, kHeadPrefix, wide, rng);
  ParamSet pn = pw.clone();
  Tensor w0 = Tensor::zeros({32, 9});
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 9; ++c) w0.at(r, c) = pw.at("f.W0").value().at(r, c);
  }
  pn.at("f.W0").value() = w0;
  Tensor x = Tensor::zeros({5, 9});
  for (double& v : x.vec()) v = rng.uniform(-1, 1);
  const Tensor z = Tensor::zeros({5, 10});
  const Tensor xz = concat_cols({&x, &z});
  const Tensor a = mlp_forward(wide, pw, kHeadPrefix, Var::constant(xz)).value();
  const Tensor b = mlp_forward(narrow, pn, kHeadPrefix, Var::constant(x)).value();
  EXPECT_TRUE(a == b);
}

TEST(Baselines, GradientChecks) {
  Rng rng(38);
  const auto ps = push_samples(20, 39);
  const auto ls = loco_samples(10, 40);
  ModelConfig pc = push_config();
  pc.target_hidden = {5};
  pc.int_hidden = {3};
  pc.decoder_hidden = 4;
  pc.gru_hidden = 3;
  ModelConfig lc = loco_config();
  lc.target_hidden = {5};
  lc.int_hidden = {3};
  lc.gru_hidden = 3;
  const auto pn = Normalizers::fit(TaskKind::kPush, ps);
  const auto ln = Normalizers::fit(TaskKind::kLoco, ls);
  const Batch pb = make_batch(TaskKind::kPush, pn, ptrs(ps, 3));
  const Batch lb = make_batch(TaskKind::kLoco, ln, ptrs(ls, 6));
  for (const std::string method : {"xyz", "direct", "recurrent", "fomaml"}) {
    auto m = make_model(method, pc, pn, rng);
    jitter_biases(m->params(), rng);
    auto r = finite_diff_check([&] { return m->loss(pb); }, m->params());
    EXPECT_LT(r.max_rel_error, 1e-4) << method << " push " << r.worst_param;
    auto l = make_model(method, lc, ln, rng);
    jitter_biases(l->params(), rng);
    r = finite_diff_check([&] { return l->loss(lb); }, l->params());
    EXPECT_LT(r.max_rel_error, 1e-4) << method << " loco " << r.worst_param;
  }
}

TEST(Baselines, RecurrentRejectsEmptyHistory) {
  Rng rng(41);
  RecurrentModel m(loco_config(), Normalizers::identity(TaskKind::kLoco), rng);
  EXPECT_THROW(m.encode_history(Tensor::zeros({1, 0})), std::exception);
  SystemObs empty;
  EXPECT_THROW(m.bind(empty), std::invalid_argument);
}

TEST(Fomaml, ZeroLearningRateOrStepsIsIdentity) {
  Rng rng(42);
  const MlpSpec spec({3, 4, 2});
  ParamSet meta;
  init_mlp(meta, "f.", spec, rng);
  Tensor x = Tensor::zeros({5, 3}), y = Tensor::zeros({5, 2});
  for (double& v : x.vec()) v = rng.uniform(-1, 1);
  for (double& v : y.vec()) v = rng.uniform(-1, 1);
  for (const auto& [lr, steps] : {std::pair{0.0, 5ul}, std::pair{0.1, 0ul}}) {
    const ParamSet a = fomaml_adapt(spec, meta, "f.", x, y, lr, steps);
    for (const auto& [name, v] : meta) EXPECT_TRUE(a.at(name).value() == v.value());
  }
}

TEST(Fomaml, OneStepOnQuadraticIsExactGradientStep) {
  const MlpSpec spec({1, 1}, Activation::kIdentity);
  ParamSet meta;
  meta.add("f.W0", Tensor::matrix(1, 1, {0.5}));
  meta.add("f.b0", Tensor::vector({0.25}));
  const Tensor x = Tensor::matrix(1, 1, {2.0});
  const Tensor y = Tensor::matrix(1, 1, {3.0});
  const double lr = 0.1;
  const ParamSet a = fomaml_adapt(spec, meta, "f.", x, y, lr, 1);
  // loss = (w*x + b - y)^2; residual 2*0.5 + 0.25 - 3 = -1.75.
  const double r = -1.75;
  EXPECT_EQ(a.at("f.W0").value()[0], 0.5 - lr * 2.0 * r * 2.0);
  EXPECT_EQ(a.at("f.b0").value()[0], 0.25 - lr * 2.0 * r);
  EXPECT_EQ(meta.at("f.W0").value()[0], 0.5);
}

TEST(Fomaml, AdaptationDoesNotIncreaseSupportLoss) {
  Rng rng(43);
  const auto ps = push_samples(4, 44);
  const auto nz = Normalizers::fit(TaskKind::kPush, ps);
  ModelConfig c = push_config();
  c.inner_lr = 0.01;
  FomamlModel m(c, nz, rng);
  for (std::size_t i = 0; i < ps.size(); i += 5) {
    const auto [x, y] = m.support(*ps[i].obs);
    const double before =
        mse(mlp_forward(m.head(), m.params(), kHeadPrefix, Var::constant(x)), Var::constant(y))
            .value()[0];
    const ParamSet fast = m.adapt(*ps[i].obs);
    const double after =
        mse(mlp_forward(m.head(), fast, kHeadPrefix, Var::constant(x)), Var::constant(y))
            .value()[0];
    EXPECT_LE(after, before);
  }
}

TEST(Fomaml, SupportTargetsAreClipped) {
  Rng rng(47);
  const auto ps = push_samples(6, 46);
  const auto nz = Normalizers::fit(TaskKind::kPush, ps);
  FomamlModel m(push_config(), nz, rng);
  for (std::size_t i = 0; i < ps.size(); i += 5) {
    const auto [x, y] = m.support(*ps[i].obs);
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_LE(std::abs(y[k]), kInputClip);
  }
}

TEST(Fomaml, MetaStepReducesQueryLoss) {
  Rng rng(45);
  const auto ps = push_samples(6, 46);
  const auto nz = Normalizers::fit(TaskKind::kPush, ps);
  FomamlModel m(push_config(), nz, rng);
  const Batch b = make_batch(TaskKind::kPush, nz, ptrs(ps));
  AdamState adam;
  const double first = m.train_step(b, adam);
  double last = first;
  for (int i = 0; i < 50; ++i) last = m.train_step(b, adam);
  EXPECT_LT(last, first);
}

TEST(ExpertEns, RetrievalRules) {
  std::vector<ExpertKey> keys;
  for (const auto& s : train_shapes()) keys.push_back({s.id, shape_grid(s.params)});
  for (const auto& s : train_shapes()) EXPECT_EQ(expert_retrieve(keys, shape_grid(s.params)), s.id);
  // Equidistant query: two one-cell grids and the empty grid between them.
  Tensor a = Tensor::zeros({16, 16}), b = Tensor::zeros({16, 16});
  a.at(0, 0) = 1.0;
  b.at(15, 15) = 1.0;
  const std::vector<ExpertKey> two{{7, b}, {3, a}};
  EXPECT_EQ(expert_retrieve(two, Tensor::zeros({16, 16})), 3);
  std::vector<int> first, second;
  for (const auto& s : test_shapes()) first.push_back(expert_retrieve(keys, shape_grid(s.params)));
  for (const auto& s : test_shapes()) second.push_back(expert_retrieve(keys, shape_grid(s.params)));
  EXPECT_EQ(first, second);
  EXPECT_EQ(expert_retrieve_param({0.5, 1.0, 1.5}, 1.25), 1);
  EXPECT_EQ(expert_retrieve_param({0.5, 1.0, 1.5}, 3.0), 2);
}

TEST(ExpertEns, LossRoutesRowsToTheirExpert) {
  Rng rng(47);
  const auto ps = push_samples(4, 48);
  ExpertEnsembleModel m(push_config(), Normalizers::fit(TaskKind::kPush, ps), rng);
  const Batch b = make_batch(TaskKind::kPush, m.norm(), ptrs(ps));
  m.params().zero_grad();
  backward(m.loss(b));
  std::set<int> used;
  for (const auto& s : ps) used.insert(s.obs->system_id);
  for (int id : m.partitions()) {
    const double mag = grad_mag(m.params().at(weight_name(ExpertEnsembleModel::prefix(id), 0)));
    EXPECT_EQ(mag > 0.0, used.count(id) > 0) << id;
  }
}

}  // namespace
}  // namespace hdyn
