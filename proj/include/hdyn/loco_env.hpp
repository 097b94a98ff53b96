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

// One-dimensional locomotion over piecewise terrain.
//
//   v' = v + dt * (a * F_max / m - g * sin(phi(x)) - c(x) * v)
//   x' = x + dt * v'
//   reward = (x' - x) / dt_r - lambda * a^2
//
// Slope: c = 0.3 everywhere, each 15-unit segment climbs a sampled height h,
// so sin(phi) = h / hypot(15, h). Pier: flat, each 4-unit block has its own
// damping c.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/rng.hpp"

namespace hdyn {

enum class LocoVariant { kSlope, kPier };

inline std::string variant_name(LocoVariant v) { return v == LocoVariant::kSlope ? "slope" : "pier"; }

struct LocoConstants {
  static constexpr double kDt = 0.05;
  static constexpr double kMass = 1.0;
  static constexpr double kForceMax = 2.0;
  static constexpr double kGravity = 1.0;
  static constexpr double kRewardDt = 1.0;
  static constexpr double kActionCost = 0.05;
  static constexpr double kSlopeDamping = 0.3;
  static constexpr double kSlopeSegment = 15.0;
  static constexpr double kPierSegment = 4.0;
};

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Train range and the (two-piece) test range of the per-segment parameter.
inline std::vector<ParamRange> loco_ranges(LocoVariant v, bool test_split) {
  if (v == LocoVariant::kSlope) {
    if (test_split) return {{0.0, 0.25}, {3.75, 4.0}};
    return {{0.5, 3.5}};
  }
  if (test_split) return {{0.0, 0.1}, {0.9, 1.0}};
  return {{0.2, 0.8}};
}

inline bool in_ranges(double p, const std::vector<ParamRange>& ranges) {
  for (const auto& r : ranges) {
    if (p >= r.lo && p <= r.hi) return true;
  }
  return false;
}

struct LocoSystem {
  LocoVariant variant = LocoVariant::kSlope;
  bool test_split = false;
  std::vector<double> segments;  // height (slope) or damping (pier), from x = 0

  double segment_length() const {
    return variant == LocoVariant::kSlope ? LocoConstants::kSlopeSegment
                                          : LocoConstants::kPierSegment;
  }
  // Segment under position x; positions before 0 or past the end use the
  // first or last segment.
  std::size_t segment_index(double x) const {
    if (!(x > 0.0)) return 0;
    const auto i = static_cast<std::size_t>(x / segment_length());
    return std::min(i, segments.size() - 1);
  }
  double param_at(double x) const { return segments.at(segment_index(x)); }

  double sin_slope(double x) const {
    if (variant != LocoVariant::kSlope) return 0.0;
    const double h = param_at(x);
    return h / std::hypot(LocoConstants::kSlopeSegment, h);
  }
  double damping(double x) const {
    return variant == LocoVariant::kSlope ? LocoConstants::kSlopeDamping : param_at(x);
  }
};

struct LocoState {
  double x = 0.0;
  double v = 0.0;
  friend bool operator==(const LocoState&, const LocoState&) = default;
};

using LocoDelta = std::array<double, 2>;

inline LocoState compose(const LocoState& s, const LocoDelta& d) { return {s.x + d[0], s.v + d[1]}; }

struct LocoStepResult {
  LocoState state;
  double reward = 0.0;
};

inline double loco_reward(double x, double x_next, double a) {
  return (x_next - x) / LocoConstants::kRewardDt - LocoConstants::kActionCost * a * a;
}

inline LocoStepResult loco_step(const LocoSystem& sys, const LocoState& s, double a) {
  if (!(a >= -1.0 && a <= 1.0)) throw std::invalid_argument("loco_step: action outside [-1, 1]");
  using C = LocoConstants;
  const double acc = a * C::kForceMax / C::kMass - C::kGravity * sys.sin_slope(s.x) -
                     sys.damping(s.x) * s.v;
  LocoState n;
  n.v = s.v + C::kDt * acc;
  n.x = s.x + C::kDt * n.v;
  return {n, loco_reward(s.x, n.x, a)};
}

inline LocoDelta loco_delta(const LocoSystem& sys, const LocoState& s, double a) {
  const LocoState n = loco_step(sys, s, a).state;
  return {n.x - s.x, n.v - s.v};
}

inline double sample_in_ranges(Rng& rng, const std::vector<ParamRange>& ranges) {
  double total = 0.0;
  for (const auto& r : ranges) total += r.hi - r.lo;
  double u = rng.uniform(0.0, total);
  for (const auto& r : ranges) {
    if (u <= r.hi - r.lo) return r.lo + u;
    u -= r.hi - r.lo;
  }
  return ranges.back().hi;
}

inline constexpr std::size_t kLocoSegments = 256;

inline LocoSystem sample_loco_system(Rng& rng, LocoVariant v, bool test_split,
                                     std::size_t n_segments = kLocoSegments) {
  LocoSystem sys;
  sys.variant = v;
  sys.test_split = test_split;
  const auto ranges = loco_ranges(v, test_split);
  sys.segments.reserve(n_segments);
  for (std::size_t i = 0; i < n_segments; ++i) sys.segments.push_back(sample_in_ranges(rng, ranges));
  return sys;
}

// Homogeneous terrain with a single parameter value (expert training worlds).
inline LocoSystem uniform_loco_system(LocoVariant v, double param,
                                      std::size_t n_segments = kLocoSegments) {
  LocoSystem sys;
  sys.variant = v;
  sys.segments.assign(n_segments, param);
  return sys;
}

}  // namespace hdyn
