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

// Finite-difference checks over every learned module, one case per module
// and seed. Biases are drawn away from zero so that no leaky-ReLU input sits
// on its kink, and grids are continuous-valued so max-pool windows have no
// ties.

#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "hdyn/baselines.hpp"
#include "hdyn/gradcheck.hpp"
#include "hdyn/hypernet.hpp"
#include "hdyn/trajectory.hpp"

namespace hdyn {

inline constexpr double kGradTolerance = 1e-4;

struct GradCase {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckResult result;
  bool pass() const { return result.max_rel_error < kGradTolerance; }
};

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

inline void randomize_biases(ParamSet& p, Rng& rng) {
  for (auto& [name, v] : p) {
    const auto dot = name.rfind('.');
    const char kind = name[dot == std::string::npos ? 0 : dot + 1];
    if (kind == 'b' || kind == 'c') {
      for (double& x : v.value().vec()) x = rng.uniform(-0.3, 0.3);
    }
  }
}

inline std::vector<Sample> tiny_push_samples(std::size_t systems, Rng& rng) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < systems; ++i) {
    const PushSystem sys = sample_push_system(rng, false);
    const auto probe = collect_push_trajectory(sys, rng, 5);
    auto obs = std::make_shared<const SystemObs>(push_system_obs(sys, probe));
    append_push_samples(obs, collect_push_trajectory(sys, rng, 5), out);
  }
  return out;
}

inline std::vector<Sample> tiny_loco_samples(std::size_t steps, Rng& rng) {
  const LocoSystem sys = sample_loco_system(rng, LocoVariant::kSlope, false);
  const auto tr =
      collect_loco_rollout(sys, [&](const LocoTrajectory&) { return rng.uniform(-1, 1); }, steps);
  std::vector<Sample> out;
  append_loco_samples(sys, tr, 0, out);
  return out;
}

// Noisy grids so max-pool never compares equal values.
inline void perturb_grids(Batch& b, Rng& rng) {
  for (double& v : b.grid.vec()) v += rng.uniform(0.0, 0.5);
}

}  // namespace detail

inline std::vector<GradCase> gradcheck_seed(std::uint64_t seed) {
  using namespace detail;
  std::vector<GradCase> out;
  auto run = [&](const std::string& name, const std::function<Var()>& f, ParamSet& p) {
    out.push_back({name, seed, finite_diff_check(f, p)});
  };
  Rng rng(seed, {0x6772616463ULL});

  {
    ParamSet p;
    const MlpSpec spec({3, 5, 4, 2}, Activation::kLeakyRelu);
    init_mlp(p, "m.", spec, rng);
    randomize_biases(p, rng);
    const Var x = Var::constant(random_tensor({6, 3}, rng));
    const Var y = Var::constant(random_tensor({6, 2}, rng));
    run("mlp_leaky_relu", [&] { return mse(mlp_forward(spec, p, "m.", x), y); }, p);
  }
  {
    ParamSet p;
    const MlpSpec spec({3, 4, 2}, Activation::kTanh);
    init_mlp(p, "m.", spec, rng);
    randomize_biases(p, rng);
    const Var x = Var::constant(random_tensor({5, 3}, rng));
    const Var y = Var::constant(random_tensor({5, 2}, rng));
    run("mlp_tanh", [&] { return mse(mlp_forward(spec, p, "m.", x), y); }, p);
  }
  {
    ParamSet p;
    const MlpSpec spec({2, 3, 2}, Activation::kLeakyRelu);
    p.add("flat", random_tensor({param_count(spec)}, rng, -0.8, 0.8));
    const Var x = Var::constant(random_tensor({7, 2}, rng));
    const Var y = Var::constant(random_tensor({7, 2}, rng));
    run("mlp_external_weights",
        [&] { return mse(mlp_forward_external(spec, p.at("flat"), x), y); }, p);
  }
  {
    ParamSet p;
    ConvStackSpec spec;
    spec.out_dim = 3;
    init_conv_stack(p, "c.", spec, rng);
    randomize_biases(p, rng);
    const Var g = Var::constant(random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0));
    const Var y = Var::constant(random_tensor({2, 3}, rng));
    run("conv_stack", [&] { return mse(conv_stack_forward(spec, p, "c.", g), y); }, p);
  }
  {
    ParamSet p;
    const GruSpec spec{3, 4};
    init_gru(p, "g.", spec, rng);
    randomize_biases(p, rng);
    const Tensor xs = random_tensor({3, 2, 3}, rng);
    const Var h0 = Var::constant(random_tensor({2, 4}, rng));
    const Var y = Var::constant(random_tensor({2, 4}, rng));
    run("gru_cell_3_steps",
        [&] {
          Var h = h0;
          for (std::size_t t = 0; t < 3; ++t) {
            Tensor x = Tensor::zeros({2, 3});
            std::copy_n(xs.data().begin() + static_cast<std::ptrdiff_t>(t * 6), 6,
                        x.data().begin());
            h = gru_cell_step(spec, p, "g.", h, Var::constant(x));
          }
          return mse(h, y);
        },
        p);
  }

  // Full training losses on miniature configurations.
  const auto ps = tiny_push_samples(12, rng);
  const auto ls = tiny_loco_samples(24, rng);
  const Normalizers pn = Normalizers::fit(TaskKind::kPush, ps);
  const Normalizers ln = Normalizers::fit(TaskKind::kLoco, ls);
  std::vector<const Sample*> prow, lrow;
  for (std::size_t i = 0; i < 3; ++i) prow.push_back(&ps[i * 7]);
  for (std::size_t i = 0; i < 4; ++i) lrow.push_back(&ls[17 + i]);
  Batch pb = make_batch(TaskKind::kPush, pn, prow);
  perturb_grids(pb, rng);
  pb.aux_grid = random_tensor({1, 1, 16, 16}, rng, 0.0, 1.0);
  const Batch lb = make_batch(TaskKind::kLoco, ln, lrow);

  ModelConfig pc;
  pc.task = TaskKind::kPush;
  pc.target_hidden = {4};
  pc.int_hidden = {3};
  pc.z_int = 1;
  pc.z_vis = 2;
  pc.decoder_hidden = 4;
  pc.hyper_hidden = 3;
  pc.gru_hidden = 3;
  for (const auto& s : train_shapes()) pc.expert_ids.push_back(s.id);
  ModelConfig lc;
  lc.task = TaskKind::kLoco;
  lc.target_hidden = {4};
  lc.int_hidden = {3};
  lc.z_int = 2;
  lc.hyper_hidden = 3;
  lc.gru_hidden = 3;
  lc.expert_params = {1.0, 3.0};

  for (const std::string method :
       {"hyperdynamics", "xyz", "direct", "recurrent", "fomaml", "expert_ens"}) {
    auto m = make_model(method, pc, pn, rng);
    randomize_biases(m->params(), rng);
    run(method + "_push_loss", [&] { return m->loss(pb); }, m->params());
    auto l = make_model(method, lc, ln, rng);
    randomize_biases(l->params(), rng);
    run(method + "_loco_loss", [&] { return l->loss(lb); }, l->params());
  }
  return out;
}

inline std::vector<GradCase> run_gradcheck_suite(std::size_t n_seeds = 20) {
  std::vector<GradCase> all;
  for (std::uint64_t s = 0; s < n_seeds; ++s) {
    auto c = gradcheck_seed(s);
    all.insert(all.end(), c.begin(), c.end());
  }
  return all;
}

}  // namespace hdyn
