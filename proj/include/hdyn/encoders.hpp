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

// System encoders. The latent code is z = [z_int, z_vis]:
//   z_int  interaction encoder (MLP) over a flattened k-step window
//   z_vis  convolutional encoder of the occupancy grid at the current
//          orientation, regularized by a dense reconstruction decoder
// Locomotion has no shape input, so z = z_int there.
//
// Parameter prefixes: "int." interaction, "vis." shape, "dec." decoder.

#pragma once

#include <string>
#include <vector>

#include "hdyn/features.hpp"
#include "hdyn/nn.hpp"

namespace hdyn {

inline constexpr std::string_view kIntPrefix = "int.";
inline constexpr std::string_view kVisPrefix = "vis.";
inline constexpr std::string_view kDecPrefix = "dec.";

inline MlpSpec interaction_spec(std::size_t window_dim, const std::vector<std::size_t>& hidden,
                                std::size_t z_int) {
  std::vector<std::size_t> sizes{window_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(z_int);
  return MlpSpec(std::move(sizes), Activation::kLeakyRelu);
}

inline ConvStackSpec shape_spec(std::size_t z_vis) {
  ConvStackSpec s;
  s.out_dim = z_vis;
  return s;
}

inline MlpSpec decoder_spec(std::size_t z_vis, std::size_t hidden) {
  return MlpSpec({z_vis, hidden, kGridSize * kGridSize}, Activation::kLeakyRelu);
}

// window: [k*step] or [n, k*step] -> [z_int] or [n, z_int].
inline Var encode_interaction(const MlpSpec& spec, const ParamSet& params, const Var& window) {
  const std::size_t got = detail::row_width(window.value());
  if (got != spec.in()) {
    throw ShapeError("encode_interaction: window has " + std::to_string(got) +
                     " features, expected " + std::to_string(spec.in()));
  }
  return mlp_forward(spec, params, kIntPrefix, window);
}

// grid: [1, 16, 16] or [n, 1, 16, 16], already at the orientation to encode.
inline Var encode_shape(const ConvStackSpec& spec, const ParamSet& params, const Var& grid) {
  return conv_stack_forward(spec, params, kVisPrefix, grid);
}

// z_vis: [z] or [n, z] -> [256] or [n, 256] unconstrained grid values.
inline Var decode_shape(const MlpSpec& spec, const ParamSet& params, const Var& z_vis) {
  return mlp_forward(spec, params, kDecPrefix, z_vis);
}

// Mean squared error between decoded values and the target grid(s).
inline Var reconstruction_loss(const Var& decoded, const Var& grid) {
  const std::size_t cells = kGridSize * kGridSize;
  const std::size_t n = grid.size() / cells;
  const Var flat = reshape(grid, n == 1 && decoded.value().rank() == 1 ? Shape{cells}
                                                                       : Shape{n, cells});
  return mse(decoded, flat);
}

inline Var assemble_latent(const Var& z_int, const Var& z_vis) {
  if (!z_vis) return z_int;
  return concat({z_int, z_vis});
}

inline void init_encoders(ParamSet& params, TaskKind task, const MlpSpec& int_spec,
                          std::size_t z_vis, std::size_t decoder_hidden, bool with_decoder,
                          Rng& rng) {
  init_mlp(params, kIntPrefix, int_spec, rng);
  if (task != TaskKind::kPush) return;
  init_conv_stack(params, kVisPrefix, shape_spec(z_vis), rng);
  if (with_decoder) init_mlp(params, kDecPrefix, decoder_spec(z_vis, decoder_hidden), rng);
}

}  // namespace hdyn
