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

// Ground-truth environments wrapped as predictors, for oracle checks of
// unrolling, planning and evaluation.

#pragma once

#include <algorithm>

#include "hdyn/model.hpp"
#include "hdyn/trajectory.hpp"

namespace hdyn {

class EnvPushPredictor : public Predictor {
 public:
  explicit EnvPushPredictor(PushSystem sys) : sys_(std::move(sys)) {}

  Tensor predict(std::span<const double> full, std::span<const double> action) const override {
    const std::size_t n = full.size() / kPushStateDim;
    Tensor out = Tensor::zeros({n, kPushStateDim});
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, kPushStateDim> s{};
      std::copy_n(full.data() + i * kPushStateDim, kPushStateDim, s.begin());
      const PushAction a{{action[2 * i], action[2 * i + 1]}};
      const PushDelta d = push_delta(sys_, PushState::from_array(s), a);
      std::copy(d.begin(), d.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * d.size()));
    }
    return out;
  }

 private:
  PushSystem sys_;
};

class EnvLocoPredictor : public Predictor {
 public:
  explicit EnvLocoPredictor(LocoSystem sys) : sys_(std::move(sys)) {}

  Tensor predict(std::span<const double> full, std::span<const double> action) const override {
    const std::size_t n = full.size() / 2;
    Tensor out = Tensor::zeros({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      const LocoDelta d = loco_delta(sys_, {full[2 * i], full[2 * i + 1]}, action[i]);
      out.data()[2 * i] = d[0];
      out.data()[2 * i + 1] = d[1];
    }
    return out;
  }

 private:
  LocoSystem sys_;
};

// Predicts no change at all. State and delta widths agree in both tasks.
class ZeroPredictor : public Predictor {
 public:
  explicit ZeroPredictor(std::size_t delta_dim) : dim_(delta_dim) {}
  Tensor predict(std::span<const double> full, std::span<const double> action) const override {
    (void)action;
    return Tensor::zeros({full.size() / dim_, dim_});
  }

 private:
  std::size_t dim_;
};

}  // namespace hdyn
