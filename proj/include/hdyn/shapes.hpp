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

// Procedural planar shape library rendered into 16x16 occupancy grids.
//
// Grid cell (row, col) has its center at x = col + 0.5 - 8, y = row + 0.5 - 8
// in cell units, measured from the grid center. A shape with size parameters
// (a, b) spans a along x and b along y, centered on the grid center. A cell is
// occupied when its center lies strictly inside the shape.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/rng.hpp"
#include "hdyn/tensor.hpp"

namespace hdyn {

inline constexpr std::size_t kGridSize = 16;
inline constexpr double kHalfGrid = kGridSize / 2.0;

enum class ShapeFamily { kRectangle, kEllipse, kTriangle, kL, kT, kU, kH };

inline constexpr std::array<ShapeFamily, 7> kAllFamilies{
    ShapeFamily::kRectangle, ShapeFamily::kEllipse, ShapeFamily::kTriangle, ShapeFamily::kL,
    ShapeFamily::kT,         ShapeFamily::kU,       ShapeFamily::kH};

inline std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kRectangle: return "rectangle";
    case ShapeFamily::kEllipse: return "ellipse";
    case ShapeFamily::kTriangle: return "triangle";
    case ShapeFamily::kL: return "L";
    case ShapeFamily::kT: return "T";
    case ShapeFamily::kU: return "U";
    case ShapeFamily::kH: return "H";
  }
  return "?";
}

struct ShapeParams {
  ShapeFamily family = ShapeFamily::kRectangle;
  double a = 10.0;  // extent along x, cells
  double b = 10.0;  // extent along y, cells

  friend bool operator==(const ShapeParams&, const ShapeParams&) = default;
};

// Stroke width of the bar-built families.
inline double bar_thickness(const ShapeParams& s) { return 0.4 * std::min(s.a, s.b); }

inline bool shape_contains(const ShapeParams& s, double x, double y) {
  const double ha = s.a / 2.0;
  const double hb = s.b / 2.0;
  const bool in_box = std::abs(x) < ha && std::abs(y) < hb;
  const double t = bar_thickness(s);
  switch (s.family) {
    case ShapeFamily::kRectangle: return in_box;
    case ShapeFamily::kEllipse: return (x / ha) * (x / ha) + (y / hb) * (y / hb) < 1.0;
    case ShapeFamily::kTriangle:
      // Base along y = -b/2, apex at y = +b/2.
      return std::abs(y) < hb && std::abs(x) < ha * (hb - y) / s.b;
    case ShapeFamily::kL: return in_box && (x < -ha + t || y < -hb + t);
    case ShapeFamily::kT: return in_box && (y > hb - t || std::abs(x) < t / 2.0);
    case ShapeFamily::kU: return in_box && (x < -ha + t || x > ha - t || y < -hb + t);
    case ShapeFamily::kH: return in_box && (x < -ha + t || x > ha - t || std::abs(y) < t / 2.0);
  }
  return false;
}

// [16, 16] occupancy in {0, 1}.
inline Tensor shape_grid(const ShapeParams& s) {
  if (!(s.a > 0.0 && s.b > 0.0 && s.a <= kGridSize && s.b <= kGridSize)) {
    throw std::invalid_argument("shape_grid: size parameters must lie in (0, 16]");
  }
  Tensor g = Tensor::zeros({kGridSize, kGridSize});
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t c = 0; c < kGridSize; ++c) {
      const double x = static_cast<double>(c) + 0.5 - kHalfGrid;
      const double y = static_cast<double>(r) + 0.5 - kHalfGrid;
      if (shape_contains(s, x, y)) g.at(r, c) = 1.0;
    }
  }
  return g;
}

inline double grid_sample_bilinear(const Tensor& grid, double col, double row) {
  const double c0 = std::floor(col);
  const double r0 = std::floor(row);
  const double fc = col - c0;
  const double fr = row - r0;
  auto cell = [&](double r, double c) {
    if (r < 0 || c < 0 || r >= kGridSize || c >= kGridSize) return 0.0;
    return grid.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  return (1 - fr) * ((1 - fc) * cell(r0, c0) + fc * cell(r0, c0 + 1)) +
         fr * ((1 - fc) * cell(r0 + 1, c0) + fc * cell(r0 + 1, c0 + 1));
}

// Rotates the grid counter-clockwise by theta about the grid center using
// inverse-mapped bilinear resampling. theta == 0 returns an exact copy.
inline Tensor rotate_grid(const Tensor& grid, double theta) {
  if (grid.shape() != Shape{kGridSize, kGridSize}) throw ShapeError("rotate_grid: expects 16x16");
  if (theta == 0.0) return grid;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Tensor out = Tensor::zeros({kGridSize, kGridSize});
  for (std::size_t r = 0; r < kGridSize; ++r) {
    for (std::size_t q = 0; q < kGridSize; ++q) {
      const double x = static_cast<double>(q) + 0.5 - kHalfGrid;
      const double y = static_cast<double>(r) + 0.5 - kHalfGrid;
      const double sx = c * x + s * y;
      const double sy = -s * x + c * y;
      const double v =
          grid_sample_bilinear(grid, sx + kHalfGrid - 0.5, sy + kHalfGrid - 0.5);
      out.at(r, q) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Library with a fixed train/test split. Object sizes span 7-12 cells (cm).

struct LibraryShape {
  int id = 0;
  ShapeParams params;
};

inline const std::vector<LibraryShape>& train_shapes() {
  static const std::vector<LibraryShape> k{
      {0, {ShapeFamily::kRectangle, 12, 7}}, {1, {ShapeFamily::kRectangle, 9, 9}},
      {2, {ShapeFamily::kEllipse, 12, 8}},   {3, {ShapeFamily::kEllipse, 10, 10}},
      {4, {ShapeFamily::kTriangle, 12, 10}}, {5, {ShapeFamily::kTriangle, 9, 12}},
      {6, {ShapeFamily::kL, 12, 10}},        {7, {ShapeFamily::kL, 9, 9}},
      {8, {ShapeFamily::kT, 12, 10}},        {9, {ShapeFamily::kT, 10, 12}},
      {10, {ShapeFamily::kU, 12, 9}},        {11, {ShapeFamily::kH, 11, 11}},
  };
  return k;
}

inline const std::vector<LibraryShape>& test_shapes() {
  static const std::vector<LibraryShape> k{
      {100, {ShapeFamily::kRectangle, 10, 8}}, {101, {ShapeFamily::kEllipse, 11, 7}},
      {102, {ShapeFamily::kTriangle, 11, 11}}, {103, {ShapeFamily::kL, 11, 8}},
      {104, {ShapeFamily::kT, 11, 9}},         {105, {ShapeFamily::kU, 10, 11}},
      {106, {ShapeFamily::kH, 9, 12}},
  };
  return k;
}

inline bool in_test_bin(const ShapeParams& s) {
  for (const auto& t : test_shapes()) {
    if (t.params.family == s.family && std::abs(t.params.a - s.a) < 0.75 &&
        std::abs(t.params.b - s.b) < 0.75) {
      return true;
    }
  }
  return false;
}

// Random library-style shape for shape-only autoencoding batches; never falls
// in a test shape's parameter bin.
inline ShapeParams random_train_shape(Rng& rng) {
  for (;;) {
    ShapeParams s{kAllFamilies[rng.index(kAllFamilies.size())], rng.uniform(7.0, 12.0),
                  rng.uniform(7.0, 12.0)};
    if (!in_test_bin(s)) return s;
  }
}

}  // namespace hdyn
