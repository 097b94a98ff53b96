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

// Hypernetwork-generated dynamics experts.
//
// H maps the latent code z to the complete flat weight vector of a target MLP
// F (layout: per layer W row-major, then b). F predicts the state delta from
// the orientation-free state and the action. For pushing the latent code
// carries the shape at its current orientation, so every rollout step
// re-encodes the rotated grid and regenerates F; for locomotion one z serves
// the whole planning horizon.

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hdyn/encoders.hpp"
#include "hdyn/model.hpp"

namespace hdyn {

inline constexpr std::string_view kHypPrefix = "hyp.";

// Target input = [state_obs, action]; pushing drops theta unless `with_theta`.
inline MlpSpec push_target_spec(const std::vector<std::size_t>& hidden = {32, 32, 32},
                                bool with_theta = false) {
  const TaskDims d = task_dims(TaskKind::kPush);
  std::vector<std::size_t> sizes{(with_theta ? d.full : d.obs) + d.action};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(d.delta);
  return MlpSpec(std::move(sizes), Activation::kLeakyRelu);
}

inline MlpSpec loco_target_spec(const std::vector<std::size_t>& hidden = {128, 128}) {
  const TaskDims d = task_dims(TaskKind::kLoco);
  std::vector<std::size_t> sizes{d.obs + d.action};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(d.delta);
  return MlpSpec(std::move(sizes), Activation::kLeakyRelu);
}

struct HyperSpec {
  MlpSpec net;
  MlpSpec target;

  HyperSpec(std::size_t z_dim, std::size_t hidden, MlpSpec target_spec)
      : net({z_dim, hidden, param_count(target_spec)}, Activation::kLeakyRelu),
        target(std::move(target_spec)) {}

  std::size_t z_dim() const { return net.in(); }
  std::size_t n_generated() const { return net.out(); }
};

// Output layer scaled by 0.1 so the first generated experts are small.
inline void init_hypernet(ParamSet& params, const HyperSpec& spec, Rng& rng) {
  init_mlp(params, kHypPrefix, spec.net, rng, 0.1);
}

// z: [|z|] or [n, |z|] -> weights [P] or [n, P].
inline Var generate_weights(const HyperSpec& spec, const ParamSet& params, const Var& z) {
  const std::size_t got = detail::row_width(z.value());
  if (got != spec.z_dim()) {
    throw ShapeError("generate_weights: latent has " + std::to_string(got) +
                     " entries, expected " + std::to_string(spec.z_dim()));
  }
  return mlp_forward(spec.net, params, kHypPrefix, z);
}

inline Var predict_delta(const MlpSpec& target, const Var& weights, const Var& state_obs,
                         const Var& action) {
  return mlp_forward_external(target, weights, concat({state_obs, action}));
}

// Euclidean prediction error per sample, averaged (the reported metric).
inline double mean_euclidean_error(const Tensor& pred, const Tensor& truth) {
  const std::size_t n = pred.rows();
  const std::size_t d = pred.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = pred[i * d + j] - truth[i * d + j];
      s += e * e;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Unrolling with any one-step model: s_{t+1} = s_t (+) f(s_t, a_t).

template <class State, class Action, class StepFn>
std::vector<State> unroll(const StepFn& f, const State& s0, const std::vector<Action>& actions) {
  std::vector<State> states{s0};
  states.reserve(actions.size() + 1);
  for (const auto& a : actions) states.push_back(compose(states.back(), f(states.back(), a)));
  return states;
}

inline PushDelta predict_push(const Predictor& p, const PushState& s, const PushAction& a) {
  const auto f = s.to_array();
  const double act[2] = {a.delta.x, a.delta.y};
  const Tensor d = p.predict(f, act);
  PushDelta out{};
  std::copy_n(d.data().begin(), out.size(), out.begin());
  return out;
}

inline LocoDelta predict_loco(const Predictor& p, const LocoState& s, double a) {
  const double f[2] = {s.x, s.v};
  const Tensor d = p.predict(f, std::span<const double>(&a, 1));
  return {d[0], d[1]};
}

// Pushing: the predictor regenerates the expert from the rotated grid at each
// visited orientation.
inline std::vector<PushState> unroll_push(const Predictor& p, const PushState& s0,
                                          const std::vector<PushAction>& actions) {
  return unroll(
      [&](const PushState& s, const PushAction& a) { return predict_push(p, s, a); }, s0,
      actions);
}

// Locomotion: one bound predictor (one z) for the whole horizon.
inline std::vector<LocoState> unroll_loco(const Predictor& p, const LocoState& s0,
                                          const std::vector<double>& actions) {
  return unroll([&](const LocoState& s, double a) { return predict_loco(p, s, a); }, s0,
                actions);
}

// ---------------------------------------------------------------------------

class HyperDynamicsModel : public Model {
 public:
  HyperDynamicsModel(ModelConfig cfg, Normalizers nz, Rng& rng)
      : Model(std::move(cfg), std::move(nz)),
        int_spec_(interaction_spec(dims().window(), cfg_.int_hidden, cfg_.z_int)),
        vis_spec_(shape_spec(cfg_.z_vis)),
        dec_spec_(decoder_spec(cfg_.z_vis, cfg_.decoder_hidden)),
        hyper_(z_dim(), cfg_.hyper_hidden, make_target()) {
    init_encoders(params_, cfg_.task, int_spec_, cfg_.z_vis, cfg_.decoder_hidden,
                  cfg_.use_decoder, rng);
    init_hypernet(params_, hyper_, rng);
  }

  std::string method() const override { return "hyperdynamics"; }
  bool uses_shape_stream() const override { return is_push() && decoder_active(); }
  bool oriented_grid() const override { return !cfg_.canonical_shape; }

  const HyperSpec& hyper_spec() const { return hyper_; }
  const MlpSpec& interaction() const { return int_spec_; }
  const ConvStackSpec& shape() const { return vis_spec_; }
  const MlpSpec& decoder() const { return dec_spec_; }

  // Prediction loss plus, when the decoder is active, the weighted
  // reconstruction loss of the batch grids and of the shape-only stream.
  Var loss(const Batch& b) override {
    Var z_vis;
    const Var z = latent(b, &z_vis);
    const Var w = generate_weights(hyper_, params_, z);
    const Var pred = predict_delta(hyper_.target, w, Var::constant(state_block(b)),
                                   Var::constant(b.action));
    Var l = prediction_loss(pred, Var::constant(b.delta), cfg_.objective);
    if (is_push() && decoder_active()) {
      Var rec = reconstruction_loss(decode_shape(dec_spec_, params_, z_vis),
                                    Var::constant(b.grid));
      if (!b.aux_grid.empty()) {
        const Var g = Var::constant(b.aux_grid);
        rec = add(rec, reconstruction_loss(
                           decode_shape(dec_spec_, params_, encode_shape(vis_spec_, params_, g)),
                           g));
      }
      l = add(l, scale(rec, cfg_.aux_weight));
    }
    return l;
  }

  // z for a batch; z_vis_out receives the shape branch (pushing).
  Var latent(const Batch& b, Var* z_vis_out = nullptr) const {
    const Var zi = encode_interaction(int_spec_, params_, Var::constant(b.window));
    if (!is_push()) return zi;
    const Var zv = encode_shape(vis_spec_, params_, Var::constant(b.grid));
    if (z_vis_out) *z_vis_out = zv;
    return assemble_latent(zi, zv);
  }

  // Graph-free pieces used by bind() and by tests.
  std::vector<double> interaction_code(const SystemObs& obs) const {
    NoGradGuard ng;
    const Tensor w = normalize_rows(nz_.window, obs.window);
    return encode_interaction(int_spec_, params_, Var::constant(w)).value().vec();
  }
  std::vector<double> shape_code(const Tensor& canonical, double theta) const {
    NoGradGuard ng;
    const Tensor g = cfg_.canonical_shape ? canonical : rotate_grid(canonical, theta);
    return encode_shape(vis_spec_, params_, Var::constant(g.reshaped({1, kGridSize, kGridSize})))
        .value()
        .vec();
  }
  std::vector<double> weights_for(const std::vector<double>& z) const {
    NoGradGuard ng;
    return generate_weights(hyper_, params_, Var::constant(Tensor::vector(z))).value().vec();
  }

  std::unique_ptr<Predictor> bind(const SystemObs& obs) const override;

 private:
  bool is_push() const { return cfg_.task == TaskKind::kPush; }
  bool decoder_active() const { return cfg_.use_decoder && cfg_.aux_weight > 0.0; }
  std::size_t z_dim() const { return cfg_.z_int + (is_push() ? cfg_.z_vis : 0); }
  MlpSpec make_target() const {
    return is_push() ? push_target_spec(cfg_.target_hidden, cfg_.canonical_shape)
                     : loco_target_spec(cfg_.target_hidden);
  }
  const Tensor& state_block(const Batch& b) const {
    return is_push() && cfg_.canonical_shape ? b.full : b.obs;
  }

  friend class HyperPredictor;

  MlpSpec int_spec_;
  ConvStackSpec vis_spec_;
  MlpSpec dec_spec_;
  HyperSpec hyper_;
};

class HyperPredictor : public Predictor {
 public:
  HyperPredictor(const HyperDynamicsModel& m, const SystemObs& obs)
      : m_(m), z_int_(m.interaction_code(obs)), grid_(obs.grid) {
    if (!m.is_push()) {
      fixed_ = m.weights_for(z_int_);
    } else if (m.cfg_.canonical_shape) {
      fixed_ = m.weights_for(latent_at(0.0));
    }
  }

  Tensor predict(std::span<const double> full, std::span<const double> action) const override {
    const TaskDims d = m_.dims();
    const std::size_t n = full.size() / d.full;
    const Tensor st = m_.is_push() && m_.cfg_.canonical_shape ? normalize_rows(m_.nz_.full, state_feature_rows(m_.cfg_.task, full))
                                                             : m_.obs_rows(full);
    const Tensor ac = normalize_rows(m_.nz_.action, action);
    const Tensor x = concat_cols({&st, &ac});
    Tensor out = Tensor::zeros({n, d.delta});
    if (!fixed_.empty()) {
      out = mlp_eval_flat(m_.hyper_.target, fixed_, x);
    } else {
      // Rows sharing an orientation share one generated expert.
      std::map<double, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < n; ++i) groups[full[i * d.full + kThetaIndex]].push_back(i);
      const std::size_t in = x.cols();
      for (const auto& [theta, idx] : groups) {
        const std::vector<double>& w = weights_at(theta);
        Tensor xs = Tensor::zeros({idx.size(), in});
        for (std::size_t r = 0; r < idx.size(); ++r) {
          std::copy_n(x.data().data() + idx[r] * in, in, xs.data().data() + r * in);
        }
        const Tensor ys = mlp_eval_flat(m_.hyper_.target, w, xs);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          std::copy_n(ys.data().data() + r * d.delta, d.delta,
                      out.data().data() + idx[r] * d.delta);
        }
      }
    }
    return m_.denorm_delta(out);
  }

  std::vector<double> latent_at(double theta) const {
    std::vector<double> z = z_int_;
    const auto zv = m_.shape_code(grid_, theta);
    z.insert(z.end(), zv.begin(), zv.end());
    return z;
  }

 private:
  const std::vector<double>& weights_at(double theta) const {
    auto it = cache_.find(theta);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 4096) cache_.clear();
    return cache_.emplace(theta, m_.weights_for(latent_at(theta))).first->second;
  }

  const HyperDynamicsModel& m_;
  std::vector<double> z_int_;
  Tensor grid_;
  std::vector<double> fixed_;
  mutable std::map<double, std::vector<double>> cache_;
};

inline std::unique_ptr<Predictor> HyperDynamicsModel::bind(const SystemObs& obs) const {
  return std::make_unique<HyperPredictor>(*this, obs);
}

}  // namespace hdyn
