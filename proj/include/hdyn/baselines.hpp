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

// Comparison models. Every forward MLP ("f." or "exp<i>.") uses the generated
// expert's hidden sizes.
//
//   xyz          f([full state, action])
//   direct       f([state_obs, action, z]) with the same encoders as the
//                hypernetwork model
//   recurrent    GRU over the interaction window, f([h, state_obs, action])
//   fomaml       first-order MAML over f([full state, action]); adapts to the
//                system's support transitions with plain gradient steps
//   expert_ens   one f([full state, action, true parameters]) per training
//                system; shape (pushing) or terrain-parameter (locomotion)
//                nearest-neighbour retrieval

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hdyn/hypernet.hpp"

namespace hdyn {

inline constexpr std::string_view kHeadPrefix = "f.";
inline constexpr std::string_view kGruPrefix = "gru.";

inline MlpSpec head_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return MlpSpec(std::move(sizes), Activation::kLeakyRelu);
}

inline Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  const std::size_t c = t.cols();
  Tensor out = Tensor::zeros({idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(t.data().data() + idx[r] * c, c, out.data().data() + r * c);
  }
  return out;
}

// Graph-free MLP over [state block, action, per-system extra columns]. The
// extra columns may depend on the row's orientation (pushing shape codes).
class MlpPredictor : public Predictor {
 public:
  using ExtraFn = std::function<std::vector<double>(double theta)>;

  MlpPredictor(TaskKind task, const Normalizers& nz, MlpSpec spec, std::vector<double> weights,
               bool full_state, std::vector<double> extra, ExtraFn extra_at = nullptr)
      : task_(task), nz_(nz), spec_(std::move(spec)), w_(std::move(weights)),
        full_state_(full_state), extra_(std::move(extra)), extra_at_(std::move(extra_at)) {}

  Tensor predict(std::span<const double> full, std::span<const double> action) const override {
    const TaskDims d = task_dims(task_);
    const std::size_t n = full.size() / d.full;
    Tensor st;
    if (full_state_) {
      st = normalize_rows(nz_.full, state_feature_rows(task_, full));
    } else {
      std::vector<double> o;
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = obs_of(task_, full.subspan(i * d.full, d.full));
        o.insert(o.end(), r.begin(), r.end());
      }
      st = normalize_rows(nz_.obs, o);
    }
    const Tensor ac = normalize_rows(nz_.action, action);
    const std::size_t ne = extra_at_ ? extra_at_(0.0).size() : extra_.size();
    Tensor ex = Tensor::zeros({n, ne});
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double>& e =
          extra_at_ ? cached(full[i * d.full + kThetaIndex]) : extra_;
      std::copy(e.begin(), e.end(), ex.data().begin() + static_cast<std::ptrdiff_t>(i * ne));
    }
    const Tensor x = ne ? concat_cols({&st, &ac, &ex}) : concat_cols({&st, &ac});
    const Tensor y = mlp_eval_flat(spec_, w_, x);
    Tensor out = Tensor::zeros(y.shape());
    for (std::size_t i = 0; i < n; ++i) {
      nz_.delta.invert(y.data().data() + i * d.delta, out.data().data() + i * d.delta);
    }
    return out;
  }

 private:
  const std::vector<double>& cached(double theta) const {
    auto it = cache_.find(theta);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 4096) cache_.clear();
    return cache_.emplace(theta, extra_at_(theta)).first->second;
  }

  TaskKind task_;
  Normalizers nz_;
  MlpSpec spec_;
  std::vector<double> w_;
  bool full_state_;
  std::vector<double> extra_;
  ExtraFn extra_at_;
  mutable std::map<double, std::vector<double>> cache_;
};

// ---------------------------------------------------------------------------

class XyzModel : public Model {
 public:
  XyzModel(ModelConfig cfg, Normalizers nz, Rng& rng)
      : Model(std::move(cfg), std::move(nz)),
        spec_(head_spec(dims().full + dims().action, cfg_.target_hidden, dims().delta)) {
    init_mlp(params_, kHeadPrefix, spec_, rng);
  }
  std::string method() const override { return "xyz"; }
  const MlpSpec& head() const { return spec_; }

  Var forward(const Batch& b) const {
    return mlp_forward(spec_, params_, kHeadPrefix,
                       Var::constant(concat_cols({&b.full, &b.action})));
  }
  Var loss(const Batch& b) override {
    return prediction_loss(forward(b), Var::constant(b.delta), cfg_.objective);
  }
  std::unique_ptr<Predictor> bind(const SystemObs&) const override {
    return std::make_unique<MlpPredictor>(cfg_.task, nz_, spec_,
                                          flatten_mlp(spec_, params_, kHeadPrefix), true,
                                          std::vector<double>{});
  }

 private:
  MlpSpec spec_;
};

// ---------------------------------------------------------------------------

class DirectModel : public Model {
 public:
  DirectModel(ModelConfig cfg, Normalizers nz, Rng& rng)
      : Model(std::move(cfg), std::move(nz)),
        int_spec_(interaction_spec(dims().window(), cfg_.int_hidden, cfg_.z_int)),
        vis_spec_(shape_spec(cfg_.z_vis)),
        dec_spec_(decoder_spec(cfg_.z_vis, cfg_.decoder_hidden)),
        spec_(head_spec(dims().obs + dims().action + z_dim(), cfg_.target_hidden,
                        dims().delta)) {
    init_encoders(params_, cfg_.task, int_spec_, cfg_.z_vis, cfg_.decoder_hidden,
                  cfg_.use_decoder, rng);
    init_mlp(params_, kHeadPrefix, spec_, rng);
  }
  std::string method() const override { return "direct"; }
  bool uses_shape_stream() const override { return is_push() && decoder_active(); }
  const MlpSpec& head() const { return spec_; }

  Var forward(const Batch& b, Var* z_vis_out = nullptr) const {
    Var z = encode_interaction(int_spec_, params_, Var::constant(b.window));
    if (is_push()) {
      const Var zv = encode_shape(vis_spec_, params_, Var::constant(b.grid));
      if (z_vis_out) *z_vis_out = zv;
      z = assemble_latent(z, zv);
    }
    const Var x = concat({Var::constant(b.obs), Var::constant(b.action), z});
    return mlp_forward(spec_, params_, kHeadPrefix, x);
  }

  Var loss(const Batch& b) override {
    Var z_vis;
    Var l = prediction_loss(forward(b, &z_vis), Var::constant(b.delta), cfg_.objective);
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

  std::unique_ptr<Predictor> bind(const SystemObs& obs) const override {
    NoGradGuard ng;
    const Tensor w = normalize_rows(nz_.window, obs.window);
    std::vector<double> zi =
        encode_interaction(int_spec_, params_, Var::constant(w)).value().vec();
    auto weights = flatten_mlp(spec_, params_, kHeadPrefix);
    if (!is_push()) {
      return std::make_unique<MlpPredictor>(cfg_.task, nz_, spec_, std::move(weights), false,
                                            std::move(zi));
    }
    const Tensor grid = obs.grid;
    auto extra_at = [this, zi, grid](double theta) {
      NoGradGuard g;
      std::vector<double> z = zi;
      const Tensor og = rotate_grid(grid, theta).reshaped({1, kGridSize, kGridSize});
      const auto zv = encode_shape(vis_spec_, params_, Var::constant(og)).value().vec();
      z.insert(z.end(), zv.begin(), zv.end());
      return z;
    };
    return std::make_unique<MlpPredictor>(cfg_.task, nz_, spec_, std::move(weights), false,
                                          std::vector<double>{}, extra_at);
  }

 private:
  bool is_push() const { return cfg_.task == TaskKind::kPush; }
  bool decoder_active() const { return cfg_.use_decoder && cfg_.aux_weight > 0.0; }
  std::size_t z_dim() const { return cfg_.z_int + (is_push() ? cfg_.z_vis : 0); }

  MlpSpec int_spec_;
  ConvStackSpec vis_spec_;
  MlpSpec dec_spec_;
  MlpSpec spec_;
};

// ---------------------------------------------------------------------------

class RecurrentModel : public Model {
 public:
  RecurrentModel(ModelConfig cfg, Normalizers nz, Rng& rng)
      : Model(std::move(cfg), std::move(nz)),
        gru_{dims().step, cfg_.gru_hidden},
        spec_(head_spec(cfg_.gru_hidden + dims().obs + dims().action, cfg_.target_hidden,
                        dims().delta)) {
    init_gru(params_, kGruPrefix, gru_, rng);
    init_mlp(params_, kHeadPrefix, spec_, rng);
  }
  std::string method() const override { return "recurrent"; }
  const MlpSpec& head() const { return spec_; }
  const GruSpec& gru() const { return gru_; }

  // window: [n, k*step] normalized -> final hidden state [n, H].
  Var encode_history(const Tensor& window) const {
    const std::size_t k = window.cols() / gru_.input;
    if (k == 0 || window.cols() % gru_.input != 0) {
      throw ShapeError("recurrent: history must hold at least one step of " +
                       std::to_string(gru_.input) + " features");
    }
    const Var w = Var::constant(window);
    Var h = Var::constant(Tensor::zeros({window.rows(), gru_.hidden}));
    for (std::size_t j = 0; j < k; ++j) {
      h = gru_cell_step(gru_, params_, kGruPrefix, h,
                        slice(w, j * gru_.input, (j + 1) * gru_.input));
    }
    return h;
  }

  Var forward(const Batch& b) const {
    const Var h = encode_history(b.window);
    return mlp_forward(spec_, params_, kHeadPrefix,
                       concat({h, Var::constant(b.obs), Var::constant(b.action)}));
  }
  Var loss(const Batch& b) override {
    return prediction_loss(forward(b), Var::constant(b.delta), cfg_.objective);
  }
  std::unique_ptr<Predictor> bind(const SystemObs& obs) const override {
    NoGradGuard ng;
    if (obs.window.empty()) throw std::invalid_argument("recurrent: empty history");
    const Tensor w = normalize_rows(nz_.window, obs.window);
    auto h = encode_history(w).value().vec();
    return std::make_unique<MlpPredictor>(cfg_.task, nz_, spec_,
                                          flatten_mlp(spec_, params_, kHeadPrefix), false,
                                          std::move(h));
  }

 private:
  GruSpec gru_;
  MlpSpec spec_;
};

// ---------------------------------------------------------------------------
// First-order MAML.

// `steps` plain gradient steps of the support MSE, starting from `meta`.
// Returns fresh leaves; `meta` is untouched.
inline ParamSet fomaml_adapt(const MlpSpec& spec, const ParamSet& meta, std::string_view prefix,
                             const Tensor& support_x, const Tensor& support_y, double inner_lr,
                             std::size_t steps) {
  ParamSet p = meta.clone();
  if (support_x.empty() || inner_lr == 0.0) return p;
  for (std::size_t s = 0; s < steps; ++s) {
    p.zero_grad();
    const Var l = mse(mlp_forward(spec, p, prefix, Var::constant(support_x)),
                      Var::constant(support_y));
    backward(l);
    for (auto& [name, v] : p) {
      const Tensor g = v.grad();
      Tensor& val = v.value();
      for (std::size_t i = 0; i < val.size(); ++i) val[i] -= inner_lr * g[i];
    }
  }
  p.zero_grad();
  return p;
}

class FomamlModel : public Model {
 public:
  FomamlModel(ModelConfig cfg, Normalizers nz, Rng& rng)
      : Model(std::move(cfg), std::move(nz)),
        spec_(head_spec(dims().full + dims().action, cfg_.target_hidden, dims().delta)) {
    init_mlp(params_, kHeadPrefix, spec_, rng);
  }
  std::string method() const override { return "fomaml"; }
  const MlpSpec& head() const { return spec_; }

  // Normalized support set of one system.
  std::pair<Tensor, Tensor> support(const SystemObs& obs) const {
    const TaskDims d = dims();
    const std::size_t n = obs.support_rows;
    if (n == 0) return {};
    std::vector<double> f, a;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = obs.support_in.data() + i * (d.full + d.action);
      f.insert(f.end(), row, row + d.full);
      a.insert(a.end(), row + d.full, row + d.full + d.action);
    }
    const Tensor fn = normalize_rows(nz_.full, state_feature_rows(cfg_.task, f));
    const Tensor an = normalize_rows(nz_.action, a);
    // Support targets are context, clipped like every other context input.
    Tensor y = normalize_rows(nz_.delta, obs.support_out);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i], -kInputClip, kInputClip);
    return {concat_cols({&fn, &an}), std::move(y)};
  }

  ParamSet adapt(const SystemObs& obs) const {
    const auto [x, y] = support(obs);
    return fomaml_adapt(spec_, params_, kHeadPrefix, x, y, cfg_.inner_lr, cfg_.inner_steps);
  }

  // Query loss before adaptation (meta parameters), for reporting.
  Var loss(const Batch& b) override {
    return prediction_loss(mlp_forward(spec_, params_, kHeadPrefix,
                                       Var::constant(concat_cols({&b.full, &b.action}))),
                           Var::constant(b.delta), cfg_.objective);
  }

  // Rows are grouped by system; each group adapts on its support set and
  // the post-adaptation query gradient is applied to the meta parameters.
  double train_step(const Batch& b, AdamState& adam) override {
    // Groups in order of first appearance; pointer order would vary per run.
    std::vector<std::pair<const SystemObs*, std::vector<std::size_t>>> groups;
    std::map<const SystemObs*, std::size_t> slot;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto [it, fresh] = slot.try_emplace(b.rows[i]->obs.get(), groups.size());
      if (fresh) groups.push_back({it->first, {}});
      groups[it->second].second.push_back(i);
    }
    params_.zero_grad();
    std::map<std::string, Tensor> acc;
    double total = 0.0;
    const Tensor x = concat_cols({&b.full, &b.action});
    for (const auto& [obs, idx] : groups) {
      ParamSet fast = adapt(*obs);
      const Var l = prediction_loss(
          mlp_forward(spec_, fast, kHeadPrefix, Var::constant(gather_rows(x, idx))),
          Var::constant(gather_rows(b.delta, idx)), cfg_.objective);
      backward(l);
      const double w = static_cast<double>(idx.size()) / static_cast<double>(b.size());
      total += w * l.value()[0];
      for (const auto& [name, v] : fast) {
        const Tensor g = v.grad();
        auto [it, fresh] = acc.try_emplace(name, Tensor::zeros(g.shape()));
        for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += w * g[i];
      }
    }
    for (auto& [name, v] : params_) {
      v.node()->grad = acc.at(name);
    }
    adam_step(adam, params_);
    return total;
  }

  std::unique_ptr<Predictor> bind(const SystemObs& obs) const override {
    const ParamSet fast = adapt(obs);
    return std::make_unique<MlpPredictor>(cfg_.task, nz_, spec_,
                                          flatten_mlp(spec_, fast, kHeadPrefix), true,
                                          std::vector<double>{});
  }

 private:
  MlpSpec spec_;
};

// ---------------------------------------------------------------------------
// Expert ensemble with ground-truth side information.

struct ExpertKey {
  int id = 0;
  Tensor grid;  // pushing retrieval key
};

// Nearest canonical grid in L2; ties go to the lowest id.
inline int expert_retrieve(const std::vector<ExpertKey>& keys, const Tensor& grid) {
  if (keys.empty()) throw std::invalid_argument("expert_retrieve: empty ensemble");
  int best = 0;
  double best_d = INFINITY;
  for (const auto& k : keys) {
    double d = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double e = k.grid[i] - grid[i];
      d += e * e;
    }
    if (d < best_d || (d == best_d && k.id < best)) {
      best = k.id;
      best_d = d;
    }
  }
  return best;
}

// Nearest terrain parameter; ties go to the lowest index.
inline int expert_retrieve_param(const std::vector<double>& params, double p) {
  if (params.empty()) throw std::invalid_argument("expert_retrieve_param: empty ensemble");
  int best = 0;
  for (std::size_t i = 1; i < params.size(); ++i) {
    if (std::abs(params[i] - p) < std::abs(params[static_cast<std::size_t>(best)] - p)) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline const Tensor& library_grid(int shape_id) {
  static const std::map<int, Tensor> grids = [] {
    std::map<int, Tensor> m;
    for (const auto& s : train_shapes()) m.emplace(s.id, shape_grid(s.params));
    for (const auto& s : test_shapes()) m.emplace(s.id, shape_grid(s.params));
    return m;
  }();
  return grids.at(shape_id);
}

class ExpertEnsembleModel : public Model {
 public:
  ExpertEnsembleModel(ModelConfig cfg, Normalizers nz, Rng& rng)
      : Model(std::move(cfg), std::move(nz)),
        spec_(head_spec(dims().full + dims().action + dims().side, cfg_.target_hidden,
                        dims().delta)) {
    for (int id : partitions()) init_mlp(params_, prefix(id), spec_, rng);
    if (cfg_.task == TaskKind::kPush) {
      for (int id : cfg_.expert_ids) keys_.push_back({id, library_grid(id)});
    }
  }
  std::string method() const override { return "expert_ens"; }
  const MlpSpec& head() const { return spec_; }

  std::vector<int> partitions() const override {
    if (cfg_.task == TaskKind::kPush) return cfg_.expert_ids;
    std::vector<int> ids;
    for (std::size_t i = 0; i < cfg_.expert_params.size(); ++i) ids.push_back(static_cast<int>(i));
    return ids;
  }

  static std::string prefix(int id) { return "exp" + std::to_string(id) + "."; }

  // Rows are routed to the expert of their training system.
  Var loss(const Batch& b) override {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < b.size(); ++i) groups[b.rows[i]->obs->system_id].push_back(i);
    const Tensor x = concat_cols({&b.full, &b.action, &b.side});
    Var total;
    for (const auto& [id, idx] : groups) {
      const std::string pre = prefix(id);
      if (!params_.contains(weight_name(pre, 0))) {
        throw std::invalid_argument("expert_ens: no expert for system " + std::to_string(id));
      }
      const Var l = scale(
          prediction_loss(mlp_forward(spec_, params_, pre, Var::constant(gather_rows(x, idx))),
                          Var::constant(gather_rows(b.delta, idx)), cfg_.objective),
          static_cast<double>(idx.size()) / static_cast<double>(b.size()));
      total = total ? add(total, l) : l;
    }
    return total;
  }

  int retrieve(const SystemObs& obs) const {
    if (cfg_.task == TaskKind::kPush) return expert_retrieve(keys_, obs.grid);
    return expert_retrieve_param(cfg_.expert_params, obs.side.at(0));
  }

  std::unique_ptr<Predictor> bind(const SystemObs& obs) const override {
    const int id = retrieve(obs);
    std::vector<double> side(obs.side.size());
    nz_.side.apply(obs.side.data(), side.data());
    return std::make_unique<MlpPredictor>(cfg_.task, nz_, spec_,
                                          flatten_mlp(spec_, params_, prefix(id)), true,
                                          std::move(side));
  }

 private:
  MlpSpec spec_;
  std::vector<ExpertKey> keys_;
};

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> k{"hyperdynamics", "xyz",    "direct",
                                          "recurrent",     "fomaml", "expert_ens"};
  return k;
}

inline std::unique_ptr<Model> make_model(const std::string& method, const ModelConfig& cfg,
                                         const Normalizers& nz, Rng& rng) {
  if (method == "hyperdynamics") return std::make_unique<HyperDynamicsModel>(cfg, nz, rng);
  if (method == "xyz") return std::make_unique<XyzModel>(cfg, nz, rng);
  if (method == "direct") return std::make_unique<DirectModel>(cfg, nz, rng);
  if (method == "recurrent") return std::make_unique<RecurrentModel>(cfg, nz, rng);
  if (method == "fomaml") return std::make_unique<FomamlModel>(cfg, nz, rng);
  if (method == "expert_ens") return std::make_unique<ExpertEnsembleModel>(cfg, nz, rng);
  throw std::invalid_argument("unknown method '" + method + "'");
}

}  // namespace hdyn
