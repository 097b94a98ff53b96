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

// Training loops, evaluation and model checkpoints.
//
// Every random draw comes from Rng(seed, {stream, ...}) so that runs are
// reproducible and evaluation trials see the same systems and tasks no
// matter which method is being evaluated.

#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/checkpoint.hpp"
#include "hdyn/config.hpp"
#include "hdyn/datasets.hpp"
#include "hdyn/metrics.hpp"
#include "hdyn/oracle.hpp"
#include "hdyn/planner.hpp"

namespace hdyn {

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Trained {
  std::unique_ptr<Model> model;
  std::vector<MetricsRow> history;
  std::uint64_t step = 0;
  Rng rng;
};

// ---------------------------------------------------------------------------
// Offline training (pushing)

namespace detail {

inline Tensor shape_stream(std::size_t n, bool oriented, Rng& rng) {
  Tensor g = Tensor::zeros({n, 1, kGridSize, kGridSize});
  for (std::size_t k = 0; k < n; ++k) {
    Tensor s = shape_grid(random_train_shape(rng));
    if (oriented) s = rotate_grid(s, rng.uniform(-std::numbers::pi, std::numbers::pi));
    std::copy(s.data().begin(), s.data().end(),
              g.data().begin() + static_cast<std::ptrdiff_t>(k * s.size()));
  }
  return g;
}

inline void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
}

// Epochs over `samples`; expert ensembles train each expert on its own
// partition with a fresh optimizer. Appends one loss row per epoch.
inline void fit_epochs(Model& m, const ExperimentConfig& cfg, const std::vector<Sample>& samples,
                       std::size_t epochs, std::size_t epoch_offset, Trained& out) {
  const TaskKind task = cfg.model.task;
  for (int part : m.partitions()) {
    std::vector<const Sample*> rows;
    for (const auto& s : samples) {
      if (part < 0 || s.obs->system_id == part) rows.push_back(&s);
    }
    if (rows.empty()) continue;
    AdamState adam;
    adam.lr = cfg.lr;
    const std::size_t bs = std::min(cfg.batch_size, rows.size());
    const std::size_t n_epochs = part < 0 ? epochs : (task == TaskKind::kPush ? cfg.expert_epochs : epochs);
    std::vector<std::size_t> idx(rows.size());
    for (std::size_t e = 0; e < n_epochs; ++e) {
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      shuffle(idx, out.rng);
      double total = 0.0;
      std::size_t nb = 0;
      for (std::size_t i = 0; i + bs <= idx.size(); i += bs) {
        std::vector<const Sample*> r;
        r.reserve(bs);
        for (std::size_t j = i; j < i + bs; ++j) r.push_back(rows[idx[j]]);
        Batch b = make_batch(task, m.norm(), std::move(r), m.oriented_grid());
        if (m.uses_shape_stream() && cfg.shape_batch > 0) {
          b.aux_grid = shape_stream(cfg.shape_batch, m.oriented_grid(), out.rng);
        }
        double l = 0.0;
        try {
          l = m.train_step(b, adam);
        } catch (const std::domain_error& e) {
          throw TrainingDiverged(m.method() + ": " + e.what() + " at step " +
                                 std::to_string(out.step));
        }
        if (!std::isfinite(l)) {
          throw TrainingDiverged(m.method() + ": non-finite loss at step " +
                                 std::to_string(out.step));
        }
        total += l;
        ++nb;
        ++out.step;
      }
      const std::string split = part < 0 ? "train" : "train_expert_" + std::to_string(part);
      out.history.push_back({m.method(), split, "loss", total / static_cast<double>(nb), cfg.seed,
                             static_cast<std::int64_t>(epoch_offset + e)});
    }
  }
}

}  // namespace detail

inline Trained train_offline(const ExperimentConfig& cfg, const std::vector<PushRecord>& train) {
  if (!cfg.is_push()) throw std::invalid_argument("train_offline: pushing only");
  const auto samples = push_samples(train);
  check_push_split_hygiene(samples);
  Rng init(cfg.seed, {kStreamInit});
  Trained out{make_model(cfg.method, cfg.model, Normalizers::fit(TaskKind::kPush, samples), init),
              {}, 0, Rng(cfg.seed, {kStreamTrain})};
  detail::fit_epochs(*out.model, cfg, samples, cfg.epochs, 0, out);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction error (pushing)

// Builds the predictor a method uses for one system.
using PushBinder = std::function<std::unique_ptr<Predictor>(const PushRecord&)>;

inline PushBinder model_binder(const Model& m) {
  return [&m](const PushRecord& r) { return m.bind(push_system_obs(r.system, r.probe)); };
}

inline PushBinder oracle_binder() {
  return [](const PushRecord& r) { return std::make_unique<EnvPushPredictor>(r.system); };
}

inline PushBinder zero_binder() {
  return [](const PushRecord&) { return std::make_unique<ZeroPredictor>(kPushStateDim); };
}

namespace detail {

inline double state_error(const PushState& a, const PushState& b) {
  const auto x = a.to_array(), y = b.to_array();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    if (i == kThetaIndex) d = wrap_angle(d);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

// Rows: pos_err_t1_cm and state_err_t1 average over every transition given
// the true state; pos_err_t5_cm and state_err_t5 compare the state after
// rolling the model from the first frame of each trajectory.
inline std::vector<MetricsRow> eval_prediction(const PushBinder& bind,
                                               const std::vector<PushRecord>& records,
                                               const std::string& method, const std::string& split,
                                               std::uint64_t seed, std::int64_t step) {
  if (records.empty()) throw std::invalid_argument("eval_prediction: no records");
  double p1 = 0, s1 = 0, p5 = 0, s5 = 0;
  std::size_t n1 = 0;
  for (const auto& r : records) {
    const auto pred = bind(r);
    const PushTrajectory& tr = r.traj;
    const std::size_t T = tr.length();
    std::vector<double> full, act;
    for (std::size_t t = 0; t < T; ++t) {
      const auto s = tr.states[t].to_array();
      full.insert(full.end(), s.begin(), s.end());
      act.insert(act.end(), {tr.actions[t].delta.x, tr.actions[t].delta.y});
    }
    const Tensor d = pred->predict(full, act);
    for (std::size_t t = 0; t < T; ++t) {
      PushDelta dl{};
      std::copy_n(d.data().begin() + static_cast<std::ptrdiff_t>(t * kPushStateDim), kPushStateDim,
                  dl.begin());
      const PushState guess = compose(tr.states[t], dl);
      p1 += (guess.p - tr.states[t + 1].p).norm();
      s1 += detail::state_error(guess, tr.states[t + 1]);
      ++n1;
    }
    PushState s = tr.states[0];
    for (std::size_t t = 0; t < T; ++t) {
      const auto f = s.to_array();
      const Tensor dd = pred->predict(f, std::vector<double>{tr.actions[t].delta.x, tr.actions[t].delta.y});
      PushDelta dl{};
      std::copy_n(dd.data().begin(), kPushStateDim, dl.begin());
      s = compose(s, dl);
    }
    p5 += (s.p - tr.states[T].p).norm();
    s5 += detail::state_error(s, tr.states[T]);
  }
  const double n = static_cast<double>(records.size());
  const double m1 = static_cast<double>(n1);
  return {{method, split, "pos_err_t1_cm", 100.0 * p1 / m1, seed, step},
          {method, split, "state_err_t1", s1 / m1, seed, step},
          {method, split, "pos_err_t5_cm", 100.0 * p5 / n, seed, step},
          {method, split, "state_err_t5", s5 / n, seed, step}};
}

// ---------------------------------------------------------------------------
// Pushing MPC

struct PushTrial {
  PushRecord system;  // traj is unused
  PushTaskInstance task;
};

// Trial i depends only on (seed, obstacles, split, i).
inline PushTrial push_trial(std::uint64_t seed, bool obstacles, Split split, std::size_t i) {
  Rng rng(seed, {kStreamMpc, obstacles ? 1u : 0u, static_cast<std::uint64_t>(split), i, 0});
  PushTrial t;
  t.system.system = sample_push_system(rng, split == Split::kNovel);
  t.system.probe = collect_push_trajectory(t.system.system, rng, 5);
  t.task = sample_push_task(t.system.system, obstacles, rng);
  return t;
}

struct PushMpcResult {
  std::vector<PushEpisode> episodes;
  std::vector<MetricsRow> rows;
};

inline PushMpcResult eval_push_mpc(const PushBinder& bind, const MpcConfig& mpc, bool obstacles,
                                   std::size_t n_trials, Split split, const std::string& method,
                                   std::uint64_t seed, std::int64_t step) {
  PushMpcResult out;
  std::size_t ok = 0, collided = 0, sound = 0;
  double dist = 0.0;
  for (std::size_t i = 0; i < n_trials; ++i) {
    const PushTrial t = push_trial(seed, obstacles, split, i);
    const auto pred = bind(t.system);
    Rng rng(seed, {kStreamMpc, obstacles ? 1u : 0u, static_cast<std::uint64_t>(split), i, 1});
    PushEpisode ep = mpc_push_episode(*pred, t.system.system, t.task.start, t.task.task, mpc, rng);
    ok += ep.success;
    collided += ep.collided;
    sound += ep.selected_plans_sound;
    dist += ep.final_distance;
    out.episodes.push_back(std::move(ep));
  }
  const double n = static_cast<double>(std::max<std::size_t>(n_trials, 1));
  const std::string sp = split_name(split) + (obstacles ? "_obstacles" : "");
  out.rows = {{method, sp, "success_rate", static_cast<double>(ok) / n, seed, step},
              {method, sp, "collision_rate", static_cast<double>(collided) / n, seed, step},
              {method, sp, "sound_plan_rate", static_cast<double>(sound) / n, seed, step},
              {method, sp, "final_distance_cm", 100.0 * dist / n, seed, step}};
  return out;
}

// ---------------------------------------------------------------------------
// Locomotion

inline LocoBinder model_loco_binder(const Model& m) {
  return [&m](const SystemObs& o) { return m.bind(o); };
}

inline LocoBinder oracle_loco_binder(const LocoSystem& sys) {
  return [sys](const SystemObs&) { return std::make_unique<EnvLocoPredictor>(sys); };
}

// Drops the oldest samples beyond `cap`.
inline void append_capped(std::deque<Sample>& buf, std::vector<Sample> add, std::size_t cap) {
  for (auto& s : add) buf.push_back(std::move(s));
  while (buf.size() > cap) buf.pop_front();
}

// One training world per rollout: expert ensembles collect in each expert's
// homogeneous world, everything else in freshly sampled training terrain.
struct LocoWorld {
  LocoSystem system;
  int id = -1;
};

inline std::vector<LocoWorld> loco_training_worlds(const ExperimentConfig& cfg, std::size_t iter) {
  std::vector<LocoWorld> w;
  if (cfg.method == "expert_ens") {
    for (std::size_t i = 0; i < cfg.model.expert_params.size(); ++i) {
      w.push_back({uniform_loco_system(cfg.variant(), cfg.model.expert_params[i]),
                   static_cast<int>(i)});
    }
    return w;
  }
  for (std::size_t r = 0; r < cfg.rollouts; ++r) {
    Rng rng(cfg.seed, {kStreamLoco, iter, r, 0});
    w.push_back({sample_loco_system(rng, cfg.variant(), false), -1});
  }
  return w;
}

inline void check_loco_split_hygiene(const LocoSystem& sys) {
  const auto ranges = loco_ranges(sys.variant, false);
  for (double p : sys.segments) {
    if (sys.test_split || !in_ranges(p, ranges)) {
      throw std::logic_error("split hygiene: held-out terrain parameter in training world");
    }
  }
}

// Rolling-mean early stop: true once the mean of the last `window`
// iteration returns falls below the previous window's mean.
inline bool rolling_mean_decreased(const std::vector<double>& returns, std::size_t window) {
  if (returns.size() < window + 1) return false;
  double now = 0.0, before = 0.0;
  const std::size_t n = returns.size();
  for (std::size_t i = 0; i < window; ++i) {
    now += returns[n - 1 - i];
    before += returns[n - 2 - i];
  }
  return now < before;
}

struct OnPolicyTrained : Trained {
  std::vector<double> returns;  // mean training-rollout return per iteration
  std::size_t max_buffer = 0;
};

inline OnPolicyTrained train_onpolicy(const ExperimentConfig& cfg) {
  if (cfg.is_push()) throw std::invalid_argument("train_onpolicy: locomotion only");
  OnPolicyTrained out;
  out.rng = Rng(cfg.seed, {kStreamTrain});
  std::deque<Sample> buffer;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto worlds = loco_training_worlds(cfg, it);
    std::vector<Sample> fresh;
    double ret = 0.0;
    for (std::size_t r = 0; r < worlds.size(); ++r) {
      const LocoWorld& w = worlds[r];
      check_loco_split_hygiene(w.system);
      Rng rng(cfg.seed, {kStreamLoco, it, r, 1});
      LocoTrajectory tr;
      if (it == 0) {
        tr = collect_loco_rollout(
            w.system, [&](const LocoTrajectory&) { return rng.uniform(-1.0, 1.0); },
            cfg.rollout_steps);
      } else {
        tr = mpc_loco_episode(model_loco_binder(*out.model), w.system, cfg.mpc, rng,
                              cfg.rollout_steps, w.id)
                 .trace;
      }
      for (double x : tr.rewards) ret += x;
      append_loco_samples(w.system, tr, w.id, fresh);
    }
    ret /= static_cast<double>(worlds.size());
    out.returns.push_back(ret);
    out.history.push_back({cfg.method, "train", "iteration_return", ret, cfg.seed,
                           static_cast<std::int64_t>(it)});
    append_capped(buffer, std::move(fresh), cfg.buffer_cap);
    out.max_buffer = std::max(out.max_buffer, buffer.size());
    if (it == 0) {
      const std::vector<Sample> first(buffer.begin(), buffer.end());
      Rng init(cfg.seed, {kStreamInit});
      out.model = make_model(cfg.method, cfg.model, Normalizers::fit(TaskKind::kLoco, first), init);
    }
    const std::vector<Sample> data(buffer.begin(), buffer.end());
    detail::fit_epochs(*out.model, cfg, data, cfg.epochs, it * cfg.epochs, out);
    if (cfg.early_stop && rolling_mean_decreased(out.returns, cfg.early_stop_window)) break;
  }
  return out;
}

// Per-seed rows: return_mean, return_std and return_median over episodes.
// Episode i depends only on (seed, variant, split, i).
inline std::vector<MetricsRow> eval_loco(const std::function<LocoBinder(const LocoSystem&)>& binder,
                                         const ExperimentConfig& cfg, Split split,
                                         const std::string& method, std::int64_t step,
                                         std::vector<double>* returns = nullptr) {
  if (split == Split::kTrain) throw std::invalid_argument("eval_loco: use seen or novel");
  std::vector<double> r;
  for (std::size_t i = 0; i < cfg.eval_episodes; ++i) {
    Rng sys_rng(cfg.seed, {kStreamEval, static_cast<std::uint64_t>(cfg.variant()),
                           static_cast<std::uint64_t>(split), i, 0});
    const LocoSystem sys = sample_loco_system(sys_rng, cfg.variant(), split == Split::kNovel);
    Rng rng(cfg.seed, {kStreamEval, static_cast<std::uint64_t>(cfg.variant()),
                       static_cast<std::uint64_t>(split), i, 1});
    r.push_back(mpc_loco_episode(binder(sys), sys, cfg.mpc, rng, cfg.rollout_steps).total_return);
  }
  if (returns) *returns = r;
  const Stats s = stats_of(r);
  const std::string sp = split_name(split);
  return {{method, sp, "return_mean", s.mean, cfg.seed, step},
          {method, sp, "return_std", s.std, cfg.seed, step},
          {method, sp, "return_median", s.median, cfg.seed, step}};
}

// ---------------------------------------------------------------------------
// Model checkpoints

inline Container model_container(const ExperimentConfig& cfg, const Model& m, std::uint64_t step,
                                 const Rng& rng) {
  Container c;
  c.header = cfg.source.text() + "__step = " + std::to_string(step) + "\n__rng = " + rng.state() +
             "\n";
  for (const auto& [name, v] : m.params()) c.records.emplace_back("param." + name, v.value());
  for (auto& t : m.norm().tensors()) c.records.push_back(std::move(t));
  return c;
}

struct LoadedModel {
  ExperimentConfig cfg;
  std::unique_ptr<Model> model;
  std::uint64_t step = 0;
  Rng rng;
};

inline ConfigMap header_config(const std::string& header) {
  std::string text;
  std::istringstream is(header);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("__", 0) != 0) text += line + "\n";
  }
  ConfigMap m;
  m.parse(text, "checkpoint");
  return m;
}

inline LoadedModel model_from_container(const Container& c) {
  LoadedModel out;
  out.cfg = resolve(header_config(c.header));
  out.step = std::stoull(header_value(c.header, "__step"));
  out.rng.set_state(header_value(c.header, "__rng"));
  const Normalizers nz = Normalizers::from_tensors([&](const std::string& n) -> const Tensor& {
    return c.at(n);
  });
  Rng init(0);
  out.model = make_model(out.cfg.method, out.cfg.model, nz, init);
  for (auto& [name, v] : out.model->params()) {
    const Tensor& t = c.at("param." + name);
    if (t.shape() != v.value().shape()) {
      throw FormatError("checkpoint: shape mismatch for parameter '" + name + "'");
    }
    v.value() = t;
  }
  for (const auto& [name, _] : c.records) {
    if (name.rfind("param.", 0) == 0 && !out.model->params().contains(name.substr(6))) {
      throw FormatError("checkpoint: unexpected parameter '" + name + "'");
    }
  }
  return out;
}

inline void save_model(const std::string& path, const ExperimentConfig& cfg, const Model& m,
                       std::uint64_t step, const Rng& rng) {
  save_container(path, model_container(cfg, m, step, rng));
}

inline LoadedModel load_model(const std::string& path) {
  return model_from_container(load_container(path));
}

// ---------------------------------------------------------------------------
// Ablations

inline const std::vector<std::string>& ablation_modes() {
  static const std::vector<std::string> k{"default",     "no_decoder",  "canonical_shape",
                                          "z_int_dim=4", "z_int_dim=8", "z_vis_dim=16",
                                          "z_vis_dim=32"};
  return k;
}

// Config for one ablation mode of the pushing model.
inline ConfigMap ablation_config(ConfigMap m, const std::string& mode) {
  m.set("method", "hyperdynamics");
  if (mode == "default") return m;
  if (mode == "no_decoder") {
    m.set("no_decoder", "true");
  } else if (mode == "canonical_shape") {
    m.set("canonical_shape", "true");
  } else if (auto eq = mode.find('='); eq != std::string::npos) {
    const std::string key = mode.substr(0, eq);
    if (key != "z_int_dim" && key != "z_vis_dim") {
      throw ConfigError("ablation: unknown mode '" + mode + "'");
    }
    m.set(key, mode.substr(eq + 1));
  } else {
    throw ConfigError("ablation: unknown mode '" + mode + "'");
  }
  return m;
}

// Trains and evaluates one mode on a shared dataset. Rows carry the method
// name "hyperdynamics[mode]".
inline std::vector<MetricsRow> run_ablation(const ConfigMap& base, const std::string& mode,
                                            const PushDataset& ds) {
  const ExperimentConfig cfg = resolve(ablation_config(base, mode));
  if (!cfg.is_push()) throw ConfigError("ablation: pushing only");
  const Trained t = train_offline(cfg, ds.train);
  const std::string name = "hyperdynamics[" + mode + "]";
  std::vector<MetricsRow> rows;
  for (Split sp : {Split::kSeen, Split::kNovel}) {
    auto r = eval_prediction(model_binder(*t.model), ds.split(sp), name, split_name(sp), cfg.seed,
                             static_cast<std::int64_t>(t.step));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

}  // namespace hdyn
