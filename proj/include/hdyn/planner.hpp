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

// Random-shooting MPC over any Predictor.
//
// Candidates are unrolled through the model in one batch per horizon step.
// Pushing candidates are drawn step by step from the sampling distribution
// evaluated at the model's predicted state, so later pushes still aim at
// the (predicted) object.

#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hdyn/features.hpp"
#include "hdyn/model.hpp"
#include "hdyn/trajectory.hpp"

namespace hdyn {

struct MpcConfig {
  std::size_t n_sequences = 30;
  std::size_t horizon = 1;
  std::size_t replan_every = 1;

  void validate() const {
    if (n_sequences < 1) throw std::invalid_argument("mpc: n_sequences must be >= 1");
    if (horizon < 1) throw std::invalid_argument("mpc: horizon must be >= 1");
    if (replan_every < 1 || replan_every > horizon) {
      throw std::invalid_argument("mpc: replan_every must be in [1, horizon]");
    }
  }

  static MpcConfig push(bool obstacles) { return {30, obstacles ? 10u : 1u, 1}; }
  static MpcConfig loco() { return {500, 20, 1}; }
};

template <class Action>
struct Candidate {
  std::vector<Action> actions;
  double cost = 0.0;
};

template <class Action>
struct Plan {
  std::vector<Action> actions;
  double cost = std::numeric_limits<double>::infinity();
  std::size_t index = 0;
  std::vector<Candidate<Action>> evaluated;
};

// Index of the first strictly smallest cost.
template <class Action>
std::size_t argmin_cost(const std::vector<Candidate<Action>>& c) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (c[i].cost < c[best].cost) best = i;
  }
  return best;
}

// `evaluate(n, rng)` samples and scores n candidates.
template <class Action, class Evaluate>
Plan<Action> random_shooting(const MpcConfig& cfg, Evaluate&& evaluate, Rng& rng) {
  cfg.validate();
  Plan<Action> plan;
  plan.evaluated = evaluate(cfg.n_sequences, rng);
  if (plan.evaluated.size() != cfg.n_sequences) {
    throw std::logic_error("random_shooting: evaluator returned wrong candidate count");
  }
  plan.index = argmin_cost(plan.evaluated);
  plan.actions = plan.evaluated[plan.index].actions;
  plan.cost = plan.evaluated[plan.index].cost;
  return plan;
}

// ---------------------------------------------------------------------------
// Pushing

struct Obstacle {
  Vec2 center;
  double radius = 0.0;
};

struct PushTask {
  Vec2 goal;
  double tolerance = 0.04;
  std::vector<Obstacle> obstacles;
  std::size_t max_steps = 20;
};

inline constexpr double kCollisionPenalty = 1e6;

inline bool collides(const PushState& s, double object_radius, const std::vector<Obstacle>& obs) {
  for (const auto& o : obs) {
    if ((s.p - o.center).norm() < object_radius + o.radius) return true;
  }
  return false;
}

// states[0] is the current state; every later state is checked for collision.
inline double push_cost(const std::vector<PushState>& states, const PushTask& task,
                        double object_radius) {
  double c = (states.back().p - task.goal).norm();
  for (std::size_t t = 1; t < states.size(); ++t) {
    if (collides(states[t], object_radius, task.obstacles)) return c + kCollisionPenalty;
  }
  return c;
}

// Planning proposal: 40% along the effector-to-goal direction turned by
// `heading`, 40% toward a point of the object's bounding box, 20% uniformly
// random; 3-6 cm.
inline PushAction sample_plan_action(const PushSystem& shape, const PushState& s, Vec2 goal,
                                     double heading, Rng& rng) {
  const double mag = rng.uniform(kPushMin, kPushMax);
  const double u = rng.uniform();
  Vec2 d;
  if (u < 0.4) {
    d = rotate(goal - s.e, heading);
  } else if (u < 0.8) {
    d = sample_bbox_point(shape, s, rng) - s.e;
  }
  const double n = d.norm();
  if (n < 1e-12) {
    const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
    return {mag * Vec2{std::cos(ang), std::sin(ang)}};
  }
  return {(mag / n) * d};
}

// Unrolls n closed-loop sampled candidates through the model in lock step.
// With a horizon above one each candidate also draws a fixed heading offset
// in [-max_heading, max_heading] so some candidates curve around obstacles.
inline constexpr double kMaxHeading = 1.2;

inline std::vector<Candidate<PushAction>> evaluate_push_candidates(
    const Predictor& model, const PushSystem& shape, const PushState& s0, const PushTask& task,
    std::size_t horizon, std::size_t n, Rng& rng) {
  std::vector<std::vector<PushState>> states(n, std::vector<PushState>{s0});
  std::vector<Candidate<PushAction>> out(n);
  std::vector<double> full(n * kPushStateDim), act(n * 2), heading(n, 0.0);
  if (horizon > 1) {
    for (double& h : heading) h = rng.uniform(-kMaxHeading, kMaxHeading);
  }
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const PushState& s = states[i].back();
      const PushAction a = sample_plan_action(shape, s, task.goal, heading[i], rng);
      out[i].actions.push_back(a);
      const auto f = s.to_array();
      std::copy(f.begin(), f.end(), full.begin() + static_cast<std::ptrdiff_t>(i * f.size()));
      act[2 * i] = a.delta.x;
      act[2 * i + 1] = a.delta.y;
    }
    const Tensor d = model.predict(full, act);
    for (std::size_t i = 0; i < n; ++i) {
      PushDelta di{};
      std::copy_n(d.data().begin() + static_cast<std::ptrdiff_t>(i * kPushStateDim),
                  kPushStateDim, di.begin());
      states[i].push_back(compose(states[i].back(), di));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i].cost = push_cost(states[i], task, shape.bounding_radius);
  }
  return out;
}

// Effector placed on the far side of the object from the goal.
inline PushState push_episode_start(const PushSystem& sys, Vec2 object, double theta, Vec2 goal) {
  PushState s;
  s.p = object;
  s.theta = theta;
  const Vec2 g = goal - object;
  const double n = g.norm();
  const Vec2 dir = n > 1e-12 ? (1.0 / n) * g : Vec2{1.0, 0.0};
  s.e = object - (sys.bounding_radius + 0.01) * dir;
  return s;
}

struct PushEpisode {
  bool success = false;
  bool collided = false;
  std::size_t steps = 0;
  double final_distance = 0.0;
  PushTrajectory trace;
  std::vector<double> plan_costs;
  bool selected_plans_sound = true;  // no colliding plan chosen while a free one existed
};

// The model sees only the object's shape (`sys.grid` and quantities derived
// from it); mass and friction stay hidden inside the real environment.
inline PushEpisode mpc_push_episode(const Predictor& model, const PushSystem& sys,
                                    const PushState& s0, const PushTask& task,
                                    const MpcConfig& cfg, Rng& rng) {
  cfg.validate();
  PushEpisode ep;
  ep.trace.states.push_back(s0);
  std::vector<PushAction> pending;
  while (ep.steps < task.max_steps) {
    const PushState& s = ep.trace.states.back();
    if ((s.p - task.goal).norm() <= task.tolerance) break;
    if (pending.empty()) {
      const auto plan = random_shooting<PushAction>(
          cfg,
          [&](std::size_t n, Rng& r) {
            return evaluate_push_candidates(model, sys, s, task, cfg.horizon, n, r);
          },
          rng);
      if (plan.cost >= kCollisionPenalty) {
        for (const auto& c : plan.evaluated) {
          if (c.cost < kCollisionPenalty) ep.selected_plans_sound = false;
        }
      }
      ep.plan_costs.push_back(plan.cost);
      pending.assign(plan.actions.begin(),
                     plan.actions.begin() + static_cast<std::ptrdiff_t>(cfg.replan_every));
    }
    const PushAction a = pending.front();
    pending.erase(pending.begin());
    ep.trace.push(a, push_delta(sys, s, a));
    ++ep.steps;
    if (collides(ep.trace.states.back(), sys.bounding_radius, task.obstacles)) ep.collided = true;
  }
  ep.final_distance = (ep.trace.states.back().p - task.goal).norm();
  ep.success = ep.final_distance <= task.tolerance && !ep.collided;
  return ep;
}

// Random pushing task: object placed away from the walls, goal on the table
// within `max_goal_distance` (or in [0.24, 0.40] m with two obstacles).
struct PushTaskInstance {
  PushState start;
  PushTask task;
};

inline PushTaskInstance sample_push_task(const PushSystem& sys, bool obstacles, Rng& rng) {
  const double margin = 0.08;
  for (;;) {
    PushTaskInstance ti;
    const Vec2 p{rng.uniform(margin, kTableSize - margin), rng.uniform(margin, kTableSize - margin)};
    const double dist = obstacles ? rng.uniform(0.24, 0.40) : rng.uniform(0.08, 0.25);
    const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Vec2 goal = p + dist * Vec2{std::cos(ang), std::sin(ang)};
    if (goal.x < margin || goal.y < margin || goal.x > kTableSize - margin ||
        goal.y > kTableSize - margin) {
      continue;
    }
    ti.task.goal = goal;
    ti.task.max_steps = obstacles ? 30 : 20;
    ti.start = push_episode_start(sys, p, rng.uniform(-std::numbers::pi, std::numbers::pi), goal);
    if (obstacles) {
      const auto& lib = train_shapes();
      const Vec2 dir = (1.0 / dist) * (goal - p);
      const Vec2 side{-dir.y, dir.x};
      const Vec2 c1 = p + rng.uniform(0.4, 0.6) * (goal - p) + rng.uniform(-0.02, 0.02) * side;
      const double a2 = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const Vec2 c2 = c1 + rng.uniform(0.15, 0.25) * Vec2{std::cos(a2), std::sin(a2)};
      for (const Vec2 c : {c1, c2}) {
        const auto& shape = lib[rng.index(lib.size())];
        const double r = make_push_system(shape.id, shape.params, 0.5, 0.01).bounding_radius;
        ti.task.obstacles.push_back({c, r});
      }
      // The start and goal must be free.
      PushState g = ti.start;
      g.p = goal;
      if (collides(ti.start, sys.bounding_radius, ti.task.obstacles) ||
          collides(g, sys.bounding_radius, ti.task.obstacles)) {
        continue;
      }
    }
    return ti;
  }
}

// ---------------------------------------------------------------------------
// Locomotion

inline double loco_cost(const std::vector<LocoState>& states, const std::vector<double>& actions) {
  double r = 0.0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    r += loco_reward(states[t].x, states[t + 1].x, actions[t]);
  }
  return -r;
}

inline std::vector<Candidate<double>> evaluate_loco_candidates(const Predictor& model,
                                                               const LocoState& s0,
                                                               std::size_t horizon,
                                                               std::size_t n, Rng& rng) {
  std::vector<Candidate<double>> out(n);
  for (auto& c : out) {
    c.actions.resize(horizon);
    for (double& a : c.actions) a = rng.uniform(-1.0, 1.0);
  }
  std::vector<std::vector<LocoState>> states(n, std::vector<LocoState>{s0});
  std::vector<double> full(2 * n), act(n);
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      full[2 * i] = states[i].back().x;
      full[2 * i + 1] = states[i].back().v;
      act[i] = out[i].actions[h];
    }
    const Tensor d = model.predict(full, act);
    for (std::size_t i = 0; i < n; ++i) {
      states[i].push_back(compose(states[i].back(), LocoDelta{d[2 * i], d[2 * i + 1]}));
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i].cost = loco_cost(states[i], out[i].actions);
  return out;
}

// Builds a predictor from what is observable before acting at step t.
using LocoBinder = std::function<std::unique_ptr<Predictor>(const SystemObs&)>;

struct LocoEpisode {
  double total_return = 0.0;
  LocoTrajectory trace;
};

inline LocoEpisode mpc_loco_episode(const LocoBinder& bind, const LocoSystem& sys,
                                    const MpcConfig& cfg, Rng& rng, std::size_t T,
                                    int world = -1) {
  cfg.validate();
  LocoEpisode ep;
  std::vector<double> pending;
  ep.trace = collect_loco_rollout(
      sys,
      [&](const LocoTrajectory& tr) {
        if (pending.empty()) {
          const auto obs = loco_system_obs(sys, tr, tr.length(), world);
          const auto model = bind(obs);
          const auto plan = random_shooting<double>(
              cfg,
              [&](std::size_t n, Rng& r) {
                return evaluate_loco_candidates(*model, tr.states.back(), cfg.horizon, n, r);
              },
              rng);
          pending.assign(plan.actions.begin(),
                         plan.actions.begin() + static_cast<std::ptrdiff_t>(cfg.replan_every));
        }
        const double a = pending.front();
        pending.erase(pending.begin());
        return a;
      },
      T);
  for (double r : ep.trace.rewards) ep.total_return += r;
  return ep;
}

}  // namespace hdyn
