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
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hdyn/autodiff.hpp"
#include "hdyn/rng.hpp"

namespace hdyn {

enum class Activation { kLeakyRelu, kTanh, kIdentity };

inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::kLeakyRelu: return kernels::leaky_relu(v);
    case Activation::kTanh: return std::tanh(v);
    case Activation::kIdentity: return v;
  }
  return v;
}

inline Var activate(Activation a, const Var& v) {
  switch (a) {
    case Activation::kLeakyRelu: return leaky_relu(v);
    case Activation::kTanh: return tanh(v);
    case Activation::kIdentity: return v;
  }
  return v;
}

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::kLeakyRelu;

  MlpSpec() = default;
  MlpSpec(std::vector<std::size_t> sizes, Activation act = Activation::kLeakyRelu)
      : layer_sizes(std::move(sizes)), activation(act) {
    validate();
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("mlp: need at least input and output sizes");
    for (std::size_t s : layer_sizes) {
      if (s == 0) throw ShapeError("mlp: layer sizes must be >= 1");
    }
  }

  std::size_t n_layers() const { return layer_sizes.size() - 1; }
  std::size_t in() const { return layer_sizes.front(); }
  std::size_t out() const { return layer_sizes.back(); }
  std::vector<std::size_t> hidden() const {
    return {layer_sizes.begin() + 1, layer_sizes.end() - 1};
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Number of scalars in the flat weight vector: per layer W (out x in) then b.
inline std::size_t param_count(const MlpSpec& spec) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    n += spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1];
  }
  return n;
}

// Offset of layer l's W block inside the flat vector.
inline std::size_t layer_offset(const MlpSpec& spec, std::size_t layer) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    n += spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1];
  }
  return n;
}

// ---------------------------------------------------------------------------
// ParamSet

// Named leaves in insertion order. Models hold one ParamSet each; names carry
// a module prefix such as "hyper." or "enc_int.".
class ParamSet {
 public:
  Var& add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("param set: duplicate name " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, Var::parameter(std::move(value)));
    return entries_.back().second;
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  const Var& at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("param set: no parameter " + std::string(name));
    return entries_[it->second].second;
  }
  Var& at(std::string_view name) {
    return const_cast<Var&>(static_cast<const ParamSet&>(*this).at(name));
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  // Total number of scalars.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : entries_) v.zero_grad();
  }

  // Deep copy with fresh leaves.
  ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, v] : entries_) out.add(name, v.value());
    return out;
  }

  // Subset whose names start with prefix (shares the leaves).
  ParamSet with_prefix(std::string_view prefix) const {
    ParamSet out;
    for (const auto& [name, v] : entries_) {
      if (name.starts_with(prefix)) {
        out.index_.emplace(name, out.entries_.size());
        out.entries_.emplace_back(name, v);
      }
    }
    return out;
  }

  std::vector<double> flat_values() const {
    std::vector<double> out;
    for (const auto& [_, v] : entries_) {
      out.insert(out.end(), v.value().data().begin(), v.value().data().end());
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

inline std::string weight_name(std::string_view prefix, std::size_t l) {
  return std::string(prefix) + "W" + std::to_string(l);
}
inline std::string bias_name(std::string_view prefix, std::size_t l) {
  return std::string(prefix) + "b" + std::to_string(l);
}

// Glorot-uniform weights, zero biases. `out_scale` multiplies the last layer.
inline void init_mlp(ParamSet& params, std::string_view prefix, const MlpSpec& spec, Rng& rng,
                     double out_scale = 1.0) {
  spec.validate();
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    const double s = l + 1 == spec.n_layers() ? out_scale : 1.0;
    Tensor w = Tensor::zeros({out, in});
    for (double& v : w.vec()) v = s * rng.uniform(-limit, limit);
    params.add(weight_name(prefix, l), std::move(w));
    params.add(bias_name(prefix, l), Tensor::zeros({out}));
  }
}

inline Var mlp_forward(const MlpSpec& spec, const ParamSet& params, std::string_view prefix,
                       const Var& x) {
  spec.validate();
  Var h = x;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Var& w = params.at(weight_name(prefix, l));
    const Var& b = params.at(bias_name(prefix, l));
    const Shape want{spec.layer_sizes[l + 1], spec.layer_sizes[l]};
    if (w.shape() != want || b.size() != want[0]) {
      throw ShapeError("mlp_forward: layer " + std::to_string(l) + " expects W" +
                       shape_str(want) + ", got " + shape_str(w.shape()));
    }
    try {
      h = linear(h, w, b);
    } catch (const ShapeError& e) {
      throw ShapeError("mlp_forward: layer " + std::to_string(l) + ": " + e.what());
    }
    if (l + 1 < spec.n_layers()) h = activate(spec.activation, h);
  }
  return h;
}

// Forward pass with weights taken from a flat vector ([P] or [n, P]).
inline Var mlp_forward_external(const MlpSpec& spec, const Var& flat_weights, const Var& x) {
  spec.validate();
  const std::size_t want = param_count(spec);
  const std::size_t got = detail::row_width(flat_weights.value());
  if (got != want) {
    throw ShapeError("mlp_forward_external: expected " + std::to_string(want) +
                     " weights, got " + std::to_string(got));
  }
  Var h = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    h = linear_flat(h, flat_weights, off, in, out);
    off += in * out + out;
    if (l + 1 < spec.n_layers()) h = activate(spec.activation, h);
  }
  return h;
}

// Graph-free evaluation for planning. x is [n, in]; returns [n, out].
inline Tensor mlp_eval_flat(const MlpSpec& spec, std::span<const double> flat, const Tensor& x) {
  if (flat.size() != param_count(spec)) {
    throw ShapeError("mlp_eval_flat: expected " + std::to_string(param_count(spec)) +
                     " weights, got " + std::to_string(flat.size()));
  }
  const std::size_t n = detail::batch_rows(x);
  if (detail::row_width(x) != spec.in()) throw ShapeError("mlp_eval_flat: input width mismatch");
  std::vector<double> cur(x.data().begin(), x.data().end());
  std::vector<double> next;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    next.assign(n * out, 0.0);
    const double* w = flat.data() + off;
    for (std::size_t i = 0; i < n; ++i) {
      kernels::linear_row(cur.data() + i * in, w, w + in * out, in, out, next.data() + i * out);
    }
    if (l + 1 < spec.n_layers()) {
      for (double& v : next) v = activate(spec.activation, v);
    }
    off += in * out + out;
    cur.swap(next);
  }
  return Tensor::wrap({n, spec.out()}, std::move(cur));
}

// Flattens the prefix's layers in the canonical order (W row-major, then b).
inline std::vector<double> flatten_mlp(const MlpSpec& spec, const ParamSet& params,
                                       std::string_view prefix) {
  std::vector<double> flat;
  flat.reserve(param_count(spec));
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const auto& w = params.at(weight_name(prefix, l)).value();
    const auto& b = params.at(bias_name(prefix, l)).value();
    flat.insert(flat.end(), w.data().begin(), w.data().end());
    flat.insert(flat.end(), b.data().begin(), b.data().end());
  }
  return flat;
}

inline ParamSet unflatten_mlp(const MlpSpec& spec, std::span<const double> flat,
                              std::string_view prefix) {
  if (flat.size() != param_count(spec)) {
    throw ShapeError("unflatten_mlp: expected " + std::to_string(param_count(spec)) +
                     " weights, got " + std::to_string(flat.size()));
  }
  ParamSet out;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t o = spec.layer_sizes[l + 1];
    out.add(weight_name(prefix, l),
            Tensor({o, in}, {flat.begin() + off, flat.begin() + off + o * in}));
    off += o * in;
    out.add(bias_name(prefix, l), Tensor({o}, {flat.begin() + off, flat.begin() + off + o}));
    off += o;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutional encoder: conv -> leaky ReLU -> 2x2 max pool, repeated, then a
// dense layer on the flattened features.

struct ConvStackSpec {
  std::size_t resolution = 16;
  std::size_t in_channels = 1;
  std::vector<std::size_t> channels{2, 4, 8};
  std::vector<std::size_t> kernels{5, 3, 3};
  std::size_t out_dim = 8;

  std::size_t flat_features() const {
    std::size_t r = resolution;
    for (std::size_t i = 0; i < channels.size(); ++i) r /= 2;
    return channels.back() * r * r;
  }
};

inline void init_conv_stack(ParamSet& params, std::string_view prefix, const ConvStackSpec& spec,
                            Rng& rng) {
  std::size_t cin = spec.in_channels;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    const std::size_t co = spec.channels[i];
    const std::size_t ks = spec.kernels[i];
    const double limit = std::sqrt(6.0 / static_cast<double>((cin + co) * ks * ks));
    Tensor k = Tensor::zeros({co, cin, ks, ks});
    for (double& v : k.vec()) v = rng.uniform(-limit, limit);
    params.add(std::string(prefix) + "K" + std::to_string(i), std::move(k));
    params.add(std::string(prefix) + "c" + std::to_string(i), Tensor::zeros({co}));
    cin = co;
  }
  init_mlp(params, std::string(prefix) + "fc.", MlpSpec({spec.flat_features(), spec.out_dim}),
           rng);
}

// grid: [n, C, H, W] or [C, H, W] (single sample, returns [out_dim]).
inline Var conv_stack_forward(const ConvStackSpec& spec, const ParamSet& params,
                              std::string_view prefix, const Var& grid) {
  const Shape& s = grid.shape();
  const bool single = s.size() == 3;
  if ((s.size() != 3 && s.size() != 4) || s[s.size() - 1] != spec.resolution ||
      s[s.size() - 2] != spec.resolution || s[s.size() - 3] != spec.in_channels) {
    throw ShapeError("conv stack: expected input [" + std::to_string(spec.in_channels) + "," +
                     std::to_string(spec.resolution) + "," + std::to_string(spec.resolution) +
                     "], got " + shape_str(s));
  }
  Var h = single ? reshape(grid, {1, s[0], s[1], s[2]}) : grid;
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    h = conv2d(h, params.at(std::string(prefix) + "K" + std::to_string(i)),
               params.at(std::string(prefix) + "c" + std::to_string(i)));
    h = maxpool2(leaky_relu(h));
  }
  const std::size_t n = h.shape()[0];
  h = reshape(h, {n, spec.flat_features()});
  Var out = mlp_forward(MlpSpec({spec.flat_features(), spec.out_dim}), params,
                        std::string(prefix) + "fc.", h);
  return single ? reshape(out, {spec.out_dim}) : out;
}

// ---------------------------------------------------------------------------
// Gated recurrent unit. Gates read the concatenation [x, h]:
//   u = sigmoid(Wu [x, h] + bu), r = sigmoid(Wr [x, h] + br)
//   c = tanh(Wc [x, r*h] + bc),   h' = (1 - u) * h + u * c

struct GruSpec {
  std::size_t input = 1;
  std::size_t hidden = 1;
};

inline void init_gru(ParamSet& params, std::string_view prefix, const GruSpec& spec, Rng& rng) {
  const std::size_t fan = spec.input + spec.hidden;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan + spec.hidden));
  for (const char* g : {"u", "r", "c"}) {
    Tensor w = Tensor::zeros({spec.hidden, fan});
    for (double& v : w.vec()) v = rng.uniform(-limit, limit);
    params.add(std::string(prefix) + "W" + g, std::move(w));
    params.add(std::string(prefix) + "b" + g, Tensor::zeros({spec.hidden}));
  }
}

inline Var gru_cell_step(const GruSpec& spec, const ParamSet& params, std::string_view prefix,
                         const Var& h, const Var& x) {
  if (detail::row_width(h.value()) != spec.hidden || detail::row_width(x.value()) != spec.input) {
    throw ShapeError("gru: expected h width " + std::to_string(spec.hidden) + ", x width " +
                     std::to_string(spec.input) + "; got " + shape_str(h.shape()) + ", " +
                     shape_str(x.shape()));
  }
  auto p = [&](const char* n) -> const Var& { return params.at(std::string(prefix) + n); };
  const Var xh = concat({x, h});
  const Var u = sigmoid(linear(xh, p("Wu"), p("bu")));
  const Var r = sigmoid(linear(xh, p("Wr"), p("br")));
  const Var c = tanh(linear(concat({x, mul(r, h)}), p("Wc"), p("bc")));
  return add(sub(h, mul(u, h)), mul(u, c));
}

}  // namespace hdyn
