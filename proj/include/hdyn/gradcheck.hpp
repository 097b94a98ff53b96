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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hdyn/nn.hpp"

namespace hdyn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

// Compares backward() gradients of the scalar `f` against central differences
// for every scalar in `params`. Relative error uses max(|a|, |n|, floor) as the
// denominator so entries with a vanishing gradient are judged absolutely.
// An entry that disagrees by more than `retry_above` is measured again with
// step h / 10, which resolves steps that straddle a leaky-ReLU or max-pool
// kink; the smaller of the two errors is kept.
inline GradCheckResult finite_diff_check(const std::function<Var()>& f, ParamSet& params,
                                         double h = 1e-5, double floor = 1e-5,
                                         double retry_above = 1e-5) {
  params.zero_grad();
  Var out = f();
  backward(out);
  std::vector<Tensor> analytic;
  for (const auto& [_, p] : params) analytic.push_back(p.grad());

  GradCheckResult res;
  std::size_t k = 0;
  for (auto& [name, p] : params) {
    Tensor& w = p.value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      const double a = analytic[k][i];
      auto rel_error = [&](double step) {
        w[i] = orig + step;
        const double fp = f().value()[0];
        w[i] = orig - step;
        const double fm = f().value()[0];
        w[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      };
      double rel = rel_error(h);
      if (rel > retry_above) rel = std::min(rel, rel_error(h / 10.0));
      ++res.n_checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
    ++k;
  }
  params.zero_grad();
  return res;
}

}  // namespace hdyn
