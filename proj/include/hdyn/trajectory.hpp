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

#pragma once

#include <functional>
#include <vector>

#include "hdyn/loco_env.hpp"
#include "hdyn/push_env.hpp"

namespace hdyn {

// states has one more entry than actions/deltas; states[t + 1] is exactly
// compose(states[t], deltas[t]).
template <class State, class Action, class Delta>
struct Trajectory {
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<Delta> deltas;
  std::vector<double> rewards;  // locomotion only

  std::size_t length() const { return actions.size(); }

  void push(const Action& a, const Delta& d) {
    actions.push_back(a);
    deltas.push_back(d);
    states.push_back(compose(states.back(), d));
  }

  bool consistent() const {
    if (states.size() != actions.size() + 1 || deltas.size() != actions.size()) return false;
    for (std::size_t t = 0; t < actions.size(); ++t) {
      if (!(compose(states[t], deltas[t]) == states[t + 1])) return false;
    }
    return true;
  }
};

using PushTrajectory = Trajectory<PushState, PushAction, PushDelta>;
using LocoTrajectory = Trajectory<LocoState, double, LocoDelta>;

inline PushTrajectory rollout_push(const PushSystem& sys, const PushState& s0,
                                   const std::vector<PushAction>& actions) {
  PushTrajectory tr;
  tr.states.push_back(s0);
  for (const auto& a : actions) tr.push(a, push_delta(sys, tr.states.back(), a));
  return tr;
}

// T pushes from a fresh random start using the data-collection action mix.
inline PushTrajectory collect_push_trajectory(const PushSystem& sys, Rng& rng, std::size_t T = 5) {
  PushTrajectory tr;
  tr.states.push_back(sample_push_start(sys, rng));
  for (std::size_t t = 0; t < T; ++t) {
    const PushAction a = sample_push_action(sys, tr.states.back(), rng);
    tr.push(a, push_delta(sys, tr.states.back(), a));
  }
  return tr;
}

// Policy sees the trajectory so far (its last state is the current one).
using LocoPolicy = std::function<double(const LocoTrajectory&)>;

inline LocoTrajectory collect_loco_rollout(const LocoSystem& sys, const LocoPolicy& policy,
                                           std::size_t T, LocoState s0 = {}) {
  LocoTrajectory tr;
  tr.states.push_back(s0);
  for (std::size_t t = 0; t < T; ++t) {
    const double a = std::clamp(policy(tr), -1.0, 1.0);
    const auto res = loco_step(sys, tr.states.back(), a);
    const LocoState& s = tr.states.back();
    const LocoDelta d{res.state.x - s.x, res.state.v - s.v};
    tr.push(a, d);
    tr.rewards.push_back(loco_reward(s.x, tr.states.back().x, a));
  }
  return tr;
}

}  // namespace hdyn
