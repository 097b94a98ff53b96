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

// Planar pushing world.
//
// A rigid object described by a 16x16 occupancy grid (1 cm cells) slides on a
// 0.6 m x 0.6 m table. A point effector moves by a commanded displacement
// over one 0.8 s step. Contact is modeled as:
//   1. the first point of the effector path inside the object (path sampled
//      every 0.1 cell, smallest path parameter wins) is the contact point c;
//   2. an impulse dv = u * m_e / (m + m_e) * n along the push direction n,
//      with u = |delta| / dt and effector mass m_e = 0.5 kg, plus the angular
//      kick dw = cross(c - p, m * dv) / I;
//   3. if the effector's end point lies inside the object, the object is
//      translated along n by the smallest 0.1-cell multiple that clears it;
//   4. for the rest of the step the object slides freely: speed falls at
//      mu * g and spin at mu * g / r_g, both stopping exactly at zero.
// Motion during the approach phase (before contact) is folded into step 4.
//
// Simulator units map onto this world as mass_kg = mass_sim / 1000 and
// mu = friction_sim * 10, giving mass in [0.3, 1.0] kg and mu in
// [0.008, 0.012].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "hdyn/rng.hpp"
#include "hdyn/shapes.hpp"
#include "hdyn/tensor.hpp"

namespace hdyn {

inline constexpr double kCellSize = 0.01;   // m
inline constexpr double kTableSize = 0.6;   // m
inline constexpr double kPushDt = 0.8;      // s
inline constexpr double kGravity = 9.81;    // m/s^2
inline constexpr double kEffectorMass = 0.5;  // kg
inline constexpr double kMassMin = 0.3, kMassMax = 1.0;
inline constexpr double kMuMin = 0.008, kMuMax = 0.012;
inline constexpr double kPushMin = 0.03, kPushMax = 0.06;
inline constexpr std::size_t kPushStateDim = 8;
inline constexpr std::size_t kPushActionDim = 2;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double cross2(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Wraps into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a <= 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

struct PushSystem {
  int shape_id = 0;
  ShapeParams shape;
  double mass = 0.5;
  double mu = 0.01;
  Tensor grid;           // canonical occupancy [16, 16]
  Vec2 centroid;         // cells, relative to the grid center
  double inertia = 0.0;  // kg m^2 about the centroid
  double radius_of_gyration = 0.0;  // m
  double bounding_radius = 0.0;     // m, farthest cell corner from the centroid
  Vec2 bbox_min, bbox_max;          // m, object frame (centroid origin)
};

inline std::size_t occupied_cells(const Tensor& grid) {
  std::size_t n = 0;
  for (double v : grid.data()) n += v > 0.5;
  return n;
}

// Second moment of the occupied cells about their centroid, each cell a
// uniform square plate of mass mass / n_cells.
inline double moment_of_inertia(const Tensor& grid, double mass) {
  const std::size_t n = occupied_cells(grid);
  if (n == 0) throw std::invalid_argument("moment_of_inertia: empty grid");
  double cx = 0.0, cy = 0.0;
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t c = 0; c < kGridSize; ++c) {
      if (grid.at(r, c) > 0.5) {
        cx += static_cast<double>(c) + 0.5 - kHalfGrid;
        cy += static_cast<double>(r) + 0.5 - kHalfGrid;
      }
    }
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  const double cell_mass = mass / static_cast<double>(n);
  double inertia = 0.0;
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t c = 0; c < kGridSize; ++c) {
      if (grid.at(r, c) <= 0.5) continue;
      const double dx = (static_cast<double>(c) + 0.5 - kHalfGrid - cx) * kCellSize;
      const double dy = (static_cast<double>(r) + 0.5 - kHalfGrid - cy) * kCellSize;
      inertia += cell_mass * (kCellSize * kCellSize / 6.0 + dx * dx + dy * dy);
    }
  }
  return inertia;
}

inline double moment_of_inertia(const PushSystem& sys) { return moment_of_inertia(sys.grid, sys.mass); }

inline Vec2 grid_centroid(const Tensor& grid) {
  const std::size_t n = occupied_cells(grid);
  if (n == 0) throw std::invalid_argument("grid_centroid: empty grid");
  Vec2 c;
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t q = 0; q < kGridSize; ++q) {
      if (grid.at(r, q) > 0.5) {
        c.x += static_cast<double>(q) + 0.5 - kHalfGrid;
        c.y += static_cast<double>(r) + 0.5 - kHalfGrid;
      }
    }
  }
  return {c.x / static_cast<double>(n), c.y / static_cast<double>(n)};
}

inline PushSystem make_push_system(int shape_id, const ShapeParams& shape, double mass, double mu) {
  PushSystem sys;
  sys.shape_id = shape_id;
  sys.shape = shape;
  sys.mass = mass;
  sys.mu = mu;
  sys.grid = shape_grid(shape);
  if (occupied_cells(sys.grid) == 0) throw std::invalid_argument("push system: empty shape");
  sys.centroid = grid_centroid(sys.grid);
  sys.inertia = moment_of_inertia(sys.grid, mass);
  sys.radius_of_gyration = std::sqrt(sys.inertia / mass);
  double rmax = 0.0;
  Vec2 lo{1e9, 1e9}, hi{-1e9, -1e9};
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t q = 0; q < kGridSize; ++q) {
      if (sys.grid.at(r, q) <= 0.5) continue;
      const double x0 = static_cast<double>(q) - kHalfGrid - sys.centroid.x;
      const double y0 = static_cast<double>(r) - kHalfGrid - sys.centroid.y;
      for (double dx : {0.0, 1.0}) {
        for (double dy : {0.0, 1.0}) {
          rmax = std::max(rmax, std::hypot(x0 + dx, y0 + dy));
        }
      }
      lo = {std::min(lo.x, x0), std::min(lo.y, y0)};
      hi = {std::max(hi.x, x0 + 1.0), std::max(hi.y, y0 + 1.0)};
    }
  }
  sys.bounding_radius = rmax * kCellSize;
  sys.bbox_min = kCellSize * lo;
  sys.bbox_max = kCellSize * hi;
  return sys;
}

struct PushState {
  Vec2 p;              // object centroid, m
  double theta = 0.0;  // rad, (-pi, pi]
  Vec2 v;              // m/s
  double omega = 0.0;  // rad/s
  Vec2 e;              // effector, m

  friend bool operator==(const PushState&, const PushState&) = default;

  std::array<double, kPushStateDim> to_array() const {
    return {p.x, p.y, theta, v.x, v.y, omega, e.x, e.y};
  }
  static PushState from_array(const std::array<double, kPushStateDim>& a) {
    return {{a[0], a[1]}, a[2], {a[3], a[4]}, a[5], {a[6], a[7]}};
  }
  double kinetic_energy(const PushSystem& sys) const {
    return 0.5 * sys.mass * (v.x * v.x + v.y * v.y) + 0.5 * sys.inertia * omega * omega;
  }
};

struct PushAction {
  Vec2 delta;
  friend bool operator==(const PushAction&, const PushAction&) = default;
};

using PushDelta = std::array<double, kPushStateDim>;

// s (+) d: plain sums, orientation wrapped.
inline PushState compose(const PushState& s, const PushDelta& d) {
  auto a = s.to_array();
  for (std::size_t i = 0; i < kPushStateDim; ++i) a[i] += d[i];
  a[2] = wrap_angle(a[2]);
  return PushState::from_array(a);
}

inline PushDelta difference(const PushState& next, const PushState& s) {
  const auto a = next.to_array();
  const auto b = s.to_array();
  PushDelta d{};
  for (std::size_t i = 0; i < kPushStateDim; ++i) d[i] = a[i] - b[i];
  d[2] = wrap_angle(a[2] - b[2]);
  return d;
}

// World point -> true when it falls inside an occupied cell of the object
// posed at (p, theta).
inline bool object_contains(const PushSystem& sys, Vec2 p, double theta, Vec2 q) {
  const Vec2 local = rotate(q - p, -theta);
  const double x = local.x / kCellSize + sys.centroid.x + kHalfGrid;
  const double y = local.y / kCellSize + sys.centroid.y + kHalfGrid;
  if (x < 0.0 || y < 0.0 || x >= kGridSize || y >= kGridSize) return false;
  return sys.grid.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) > 0.5;
}

namespace detail {

// Closed-form decay of |rate| under constant deceleration over time t.
// Returns the distance travelled; updates rate (sign preserved).
inline double decay(double& rate, double decel, double t) {
  const double speed = std::abs(rate);
  if (speed == 0.0 || t <= 0.0) return 0.0;
  const double sign = rate > 0.0 ? 1.0 : -1.0;
  if (speed <= decel * t) {
    rate = 0.0;
    return sign * speed * speed / (2.0 * decel);
  }
  const double dist = speed * t - 0.5 * decel * t * t;
  rate = sign * (speed - decel * t);
  return sign * dist;
}

inline void slide(const PushSystem& sys, PushState& s, double t) {
  const double speed = s.v.norm();
  if (speed > 0.0) {
    const Vec2 dir = (1.0 / speed) * s.v;
    double sp = speed;
    const double dist = decay(sp, sys.mu * kGravity, t);
    s.p = s.p + dist * dir;
    s.v = sp * dir;
  }
  const double ang = decay(s.omega, sys.mu * kGravity / sys.radius_of_gyration, t);
  s.theta = wrap_angle(s.theta + ang);
}

inline void clamp_to_table(PushState& s) {
  auto clamp_axis = [](double& pos, double& vel) {
    if (pos < 0.0) {
      pos = 0.0;
      vel = 0.0;
    } else if (pos > kTableSize) {
      pos = kTableSize;
      vel = 0.0;
    }
  };
  clamp_axis(s.p.x, s.v.x);
  clamp_axis(s.p.y, s.v.y);
  double dummy = 0.0;
  clamp_axis(s.e.x, dummy);
  clamp_axis(s.e.y, dummy);
}

}  // namespace detail

inline PushState push_step(const PushSystem& sys, const PushState& s, const PushAction& a) {
  PushState n = s;
  const double len = a.delta.norm();
  double slide_time = kPushDt;
  if (len > 0.0) {
    n.e = s.e + a.delta;
    const Vec2 dir = (1.0 / len) * a.delta;
    const double step = 0.1 * kCellSize;
    const auto samples = static_cast<std::size_t>(std::ceil(len / step));
    for (std::size_t i = 0; i <= samples; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(samples);
      const Vec2 q = s.e + t * a.delta;
      if (!object_contains(sys, s.p, s.theta, q)) continue;
      const double u = len / kPushDt;
      const Vec2 dv = (u * kEffectorMass / (sys.mass + kEffectorMass)) * dir;
      n.v = s.v + dv;
      n.omega = s.omega + cross2(q - s.p, sys.mass * dv) / sys.inertia;
      // Quasi-static resolution of the effector's final penetration.
      const auto max_shift = static_cast<std::size_t>(
          std::ceil((len + 2.0 * sys.bounding_radius) / step));
      for (std::size_t j = 1; j <= max_shift && object_contains(sys, n.p, n.theta, n.e); ++j) {
        n.p = s.p + (static_cast<double>(j) * step) * dir;
      }
      slide_time = kPushDt * (1.0 - t);
      break;
    }
  }
  detail::slide(sys, n, slide_time);
  detail::clamp_to_table(n);
  return n;
}

// The increment applied by one environment step; rollouts advance with
// compose(s, push_delta(...)) so recorded deltas replay exactly.
inline PushDelta push_delta(const PushSystem& sys, const PushState& s, const PushAction& a) {
  return difference(push_step(sys, s, a), s);
}

// ---------------------------------------------------------------------------
// Sampling

inline PushSystem sample_push_system(Rng& rng, bool test_split) {
  const auto& lib = test_split ? test_shapes() : train_shapes();
  const auto& shape = lib[rng.index(lib.size())];
  const double mass = rng.uniform(kMassMin, kMassMax);
  const double mu = rng.uniform(kMuMin, kMuMax);
  return make_push_system(shape.id, shape.params, mass, mu);
}

// Object placed uniformly on the table (kept 0.1 m from the edges), effector
// 6-10 cm from the object center in a random direction, outside the object.
inline PushState sample_push_start(const PushSystem& sys, Rng& rng) {
  PushState s;
  s.p = {rng.uniform(0.1, kTableSize - 0.1), rng.uniform(0.1, kTableSize - 0.1)};
  s.theta = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
  for (;;) {
    const double r = rng.uniform(0.06, 0.10);
    const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
    s.e = s.p + r * Vec2{std::cos(ang), std::sin(ang)};
    if (!object_contains(sys, s.p, s.theta, s.e)) return s;
  }
}

// Random point of the object's (oriented) bounding box in world coordinates.
inline Vec2 sample_bbox_point(const PushSystem& sys, const PushState& s, Rng& rng) {
  const Vec2 local{rng.uniform(sys.bbox_min.x, sys.bbox_max.x),
                   rng.uniform(sys.bbox_min.y, sys.bbox_max.y)};
  return s.p + rotate(local, s.theta);
}

// With probability 0.8 the push heads for a random point of the object's
// bounding box, otherwise in a uniformly random direction; magnitude 3-6 cm.
inline PushAction sample_push_action(const PushSystem& sys, const PushState& s, Rng& rng) {
  const double mag = rng.uniform(kPushMin, kPushMax);
  Vec2 dir;
  if (rng.bernoulli(0.8)) {
    const Vec2 d = sample_bbox_point(sys, s, rng) - s.e;
    const double n = d.norm();
    if (n > 1e-12) dir = (1.0 / n) * d;
  }
  if (dir.norm() == 0.0) {
    const double ang = rng.uniform(-std::numbers::pi, std::numbers::pi);
    dir = {std::cos(ang), std::sin(ang)};
  }
  return {mag * dir};
}

}  // namespace hdyn
