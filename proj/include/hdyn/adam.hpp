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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hdyn/nn.hpp"

namespace hdyn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Bias-corrected Adam over every entry of `params` in set order. Moments are
// allocated on the first call; the set must keep the same layout afterwards.
inline void adam_step(AdamState& state, ParamSet& params) {
  if (state.m.empty()) {
    for (const auto& [_, p] : params) {
      state.m.push_back(Tensor::zeros(p.shape()));
      state.v.push_back(Tensor::zeros(p.shape()));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam: parameter set layout changed");
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  std::size_t k = 0;
  for (auto& [name, p] : params) {
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    ++k;
    if (m.shape() != p.shape()) throw ShapeError("adam: moment shape mismatch for " + name);
    const Node* n = p.node();
    if (n->grad.shape() != p.shape()) continue;  // never reached by backward
    Tensor& w = p.value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = n->grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] -= state.lr * mh / (std::sqrt(vh) + state.eps);
    }
  }
}

}  // namespace hdyn
