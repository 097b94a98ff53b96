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

// Raw per-transition samples, what a model may observe about a system, and
// per-feature standardization.
//
// Pushing interaction windows hold k = 5 steps of [state(8), action(2),
// delta(8)]. Locomotion windows hold the k = 16 most recent steps of
// [v, a, dx, dv], zero-padded at the start of an episode.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/trajectory.hpp"

namespace hdyn {

enum class TaskKind { kPush, kLoco };

struct TaskDims {
  std::size_t full = 0;    // full state
  std::size_t obs = 0;     // state seen by generated experts (pushing drops theta)
  std::size_t action = 0;
  std::size_t delta = 0;
  std::size_t step = 0;    // window features per step
  std::size_t k = 0;       // window steps
  std::size_t side = 0;    // ground-truth system parameters

  std::size_t window() const { return step * k; }
};

inline TaskDims task_dims(TaskKind t) {
  if (t == TaskKind::kPush) return {8, 7, 2, 8, 18, 5, 2};
  return {2, 2, 1, 2, 4, 16, 1};
}

inline constexpr std::size_t kThetaIndex = 2;

// Everything a model may condition on for one system.
struct SystemObs {
  std::vector<double> window;       // k * step, raw units
  std::vector<double> support_in;   // rows of [full, action]
  std::vector<double> support_out;  // rows of delta
  std::size_t support_rows = 0;
  std::vector<double> side;  // mass, mu (pushing) or terrain parameter (locomotion)
  int system_id = -1;        // library shape id (pushing) or terrain-world index
  Tensor grid;               // canonical occupancy (pushing)
};

struct Sample {
  std::shared_ptr<const SystemObs> obs;
  std::vector<double> full;
  std::vector<double> action;
  std::vector<double> delta;
};

// Model-side encoding of a full state. Pushing replaces the effector
// position with its offset from the object so contact geometry is a
// direct input; the map is invertible.
inline std::vector<double> state_features(TaskKind t, std::span<const double> full) {
  std::vector<double> f(full.begin(), full.end());
  if (t == TaskKind::kPush) {
    f[6] -= f[0];
    f[7] -= f[1];
  }
  return f;
}

inline std::vector<double> state_feature_rows(TaskKind t, std::span<const double> rows) {
  const std::size_t d = t == TaskKind::kPush ? 8 : 2;
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i + d <= rows.size(); i += d) {
    const auto f = state_features(t, rows.subspan(i, d));
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

// Features seen by generated experts (pushing drops theta).
inline std::vector<double> obs_of(TaskKind t, std::span<const double> full) {
  std::vector<double> o = state_features(t, full);
  if (t == TaskKind::kPush) o.erase(o.begin() + kThetaIndex);
  return o;
}

// ---------------------------------------------------------------------------
// Pushing

inline std::vector<double> push_window(const PushTrajectory& probe) {
  std::vector<double> w;
  w.reserve(probe.length() * 18);
  for (std::size_t t = 0; t < probe.length(); ++t) {
    const auto s = state_features(TaskKind::kPush, probe.states[t].to_array());
    w.insert(w.end(), s.begin(), s.end());
    w.push_back(probe.actions[t].delta.x);
    w.push_back(probe.actions[t].delta.y);
    w.insert(w.end(), probe.deltas[t].begin(), probe.deltas[t].end());
  }
  return w;
}

inline SystemObs push_system_obs(const PushSystem& sys, const PushTrajectory& probe) {
  if (probe.length() != task_dims(TaskKind::kPush).k) {
    throw std::invalid_argument("push probe must have " +
                                std::to_string(task_dims(TaskKind::kPush).k) + " steps, got " +
                                std::to_string(probe.length()));
  }
  SystemObs o;
  o.window = push_window(probe);
  for (std::size_t t = 0; t < probe.length(); ++t) {
    const auto s = probe.states[t].to_array();
    o.support_in.insert(o.support_in.end(), s.begin(), s.end());
    o.support_in.push_back(probe.actions[t].delta.x);
    o.support_in.push_back(probe.actions[t].delta.y);
    o.support_out.insert(o.support_out.end(), probe.deltas[t].begin(), probe.deltas[t].end());
  }
  o.support_rows = probe.length();
  o.side = {sys.mass, sys.mu};
  o.system_id = sys.shape_id;
  o.grid = sys.grid;
  return o;
}

inline void append_push_samples(const std::shared_ptr<const SystemObs>& obs,
                                const PushTrajectory& tr, std::vector<Sample>& out) {
  for (std::size_t t = 0; t < tr.length(); ++t) {
    const auto s = tr.states[t].to_array();
    out.push_back({obs,
                   {s.begin(), s.end()},
                   {tr.actions[t].delta.x, tr.actions[t].delta.y},
                   {tr.deltas[t].begin(), tr.deltas[t].end()}});
  }
}

// ---------------------------------------------------------------------------
// Locomotion

// History window ending just before step t.
inline std::vector<double> loco_window(const LocoTrajectory& tr, std::size_t t,
                                       std::size_t k = 16) {
  std::vector<double> w(4 * k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (t + j < k) continue;
    const std::size_t i = t + j - k;
    w[4 * j + 0] = tr.states[i].v;
    w[4 * j + 1] = tr.actions[i];
    w[4 * j + 2] = tr.deltas[i][0];
    w[4 * j + 3] = tr.deltas[i][1];
  }
  return w;
}

// Observation available when acting at step t; `param` is the ground-truth
// terrain parameter under the current position (oracle side information).
inline SystemObs loco_system_obs(const LocoSystem& sys, const LocoTrajectory& tr, std::size_t t,
                                 int world = -1, std::size_t k = 16) {
  SystemObs o;
  o.window = loco_window(tr, t, k);
  for (std::size_t i = t > k ? t - k : 0; i < t; ++i) {
    o.support_in.insert(o.support_in.end(), {tr.states[i].x, tr.states[i].v, tr.actions[i]});
    o.support_out.insert(o.support_out.end(), {tr.deltas[i][0], tr.deltas[i][1]});
    ++o.support_rows;
  }
  o.side = {sys.param_at(tr.states[t].x)};
  o.system_id = world;
  return o;
}

inline void append_loco_samples(const LocoSystem& sys, const LocoTrajectory& tr, int world,
                                std::vector<Sample>& out, std::size_t k = 16) {
  for (std::size_t t = 0; t < tr.length(); ++t) {
    auto obs = std::make_shared<const SystemObs>(loco_system_obs(sys, tr, t, world, k));
    out.push_back({std::move(obs),
                   {tr.states[t].x, tr.states[t].v},
                   {tr.actions[t]},
                   {tr.deltas[t][0], tr.deltas[t][1]}});
  }
}

// ---------------------------------------------------------------------------
// Standardization

// Standardizes each feature; inputs are additionally clipped at `clip`
// standard deviations (0 disables) because several state components are
// mostly zero with rare large values.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;
  double clip = 0.0;

  std::size_t dim() const { return mean.size(); }

  // rows: n * dim values, row-major.
  static Normalizer fit(std::span<const double> rows, std::size_t dim, double clip = 0.0) {
    if (dim == 0 || rows.size() % dim != 0 || rows.empty()) {
      throw std::invalid_argument("Normalizer::fit: bad row data");
    }
    const std::size_t n = rows.size() / dim;
    Normalizer nz;
    nz.clip = clip;
    nz.mean.assign(dim, 0.0);
    nz.std.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) nz.mean[j] += rows[i * dim + j];
    }
    for (double& m : nz.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = rows[i * dim + j] - nz.mean[j];
        nz.std[j] += d * d;
      }
    }
    for (double& s : nz.std) {
      s = std::sqrt(s / static_cast<double>(n));
      if (!(s > 1e-8)) s = 1.0;
    }
    return nz;
  }

  static Normalizer identity(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0), 0.0};
  }

  void apply(const double* in, double* out) const {
    for (std::size_t j = 0; j < dim(); ++j) {
      out[j] = (in[j] - mean[j]) / std[j];
      if (clip > 0.0) out[j] = std::clamp(out[j], -clip, clip);
    }
  }
  void invert(const double* in, double* out) const {
    for (std::size_t j = 0; j < dim(); ++j) out[j] = in[j] * std[j] + mean[j];
  }
};

inline constexpr double kInputClip = 5.0;

struct Normalizers {
  Normalizer full, obs, action, delta, window, side;

  static Normalizers fit(TaskKind t, const std::vector<Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("Normalizers::fit: no samples");
    const TaskDims d = task_dims(t);
    std::vector<double> f, o, a, dl, w, s;
    for (const auto& x : samples) {
      const auto sf = state_features(t, x.full);
      f.insert(f.end(), sf.begin(), sf.end());
      const auto ob = obs_of(t, x.full);
      o.insert(o.end(), ob.begin(), ob.end());
      a.insert(a.end(), x.action.begin(), x.action.end());
      dl.insert(dl.end(), x.delta.begin(), x.delta.end());
      w.insert(w.end(), x.obs->window.begin(), x.obs->window.end());
      s.insert(s.end(), x.obs->side.begin(), x.obs->side.end());
    }
    return {Normalizer::fit(f, d.full, kInputClip),    Normalizer::fit(o, d.obs, kInputClip),
            Normalizer::fit(a, d.action, kInputClip),  Normalizer::fit(dl, d.delta),
            Normalizer::fit(w, d.window(), kInputClip), Normalizer::fit(s, d.side, kInputClip)};
  }

  static Normalizers identity(TaskKind t) {
    const TaskDims d = task_dims(t);
    return {Normalizer::identity(d.full),   Normalizer::identity(d.obs),
            Normalizer::identity(d.action), Normalizer::identity(d.delta),
            Normalizer::identity(d.window()), Normalizer::identity(d.side)};
  }

  // Named tensors for checkpoints.
  std::vector<std::pair<std::string, Tensor>> tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto put = [&](const std::string& n, const Normalizer& z) {
      out.emplace_back("norm." + n + ".mean", Tensor::vector(z.mean));
      out.emplace_back("norm." + n + ".std", Tensor::vector(z.std));
      out.emplace_back("norm." + n + ".clip", Tensor::scalar(z.clip));
    };
    put("full", full);
    put("obs", obs);
    put("action", action);
    put("delta", delta);
    put("window", window);
    put("side", side);
    return out;
  }

  // Inverse of tensors(); `at` looks a record up by name.
  template <class Lookup>
  static Normalizers from_tensors(Lookup&& at) {
    auto get = [&](const std::string& n) {
      return Normalizer{at("norm." + n + ".mean").vec(), at("norm." + n + ".std").vec(),
                        at("norm." + n + ".clip")[0]};
    };
    return {get("full"), get("obs"), get("action"), get("delta"), get("window"), get("side")};
  }
};

// Applies `nz` to each row of a [n, dim] block.
inline Tensor normalize_rows(const Normalizer& nz, std::span<const double> rows) {
  const std::size_t d = nz.dim();
  const std::size_t n = rows.size() / d;
  Tensor t = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) nz.apply(rows.data() + i * d, t.data().data() + i * d);
  return t;
}

}  // namespace hdyn
